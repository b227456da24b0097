// Copyright 2026 The Safeflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SAFEFLOW_MODEL_IO_H_
#define SAFEFLOW_MODEL_IO_H_

#include <string>

#include "json.hpp"
#include "safeflow/bilip.hpp"

namespace safeflow {

// Everything needed to evaluate f(x, x*) and roll out trajectories.
struct PlannerModel {
  BiLipMap map;
  double lambda = 1.0;
  double level_c = 0.0;
  nlohmann::json config = nlohmann::json::object();  // invoking configuration
};

nlohmann::json ModelToJson(const PlannerModel& model);
// Throws InputError on malformed input or when the stored mu/nu disagree
// with the bounds recomputed from the blocks.
PlannerModel ModelFromJson(const nlohmann::json& j);

void SaveModel(const PlannerModel& model, const std::string& path);
PlannerModel LoadModel(const std::string& path);

// Writes j with a trailing newline; throws InputError if the file cannot be
// opened.
void WriteJsonFile(const nlohmann::json& j, const std::string& path);
nlohmann::json ReadJsonFile(const std::string& path);

}  // namespace safeflow

#endif  // SAFEFLOW_MODEL_IO_H_
