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


#ifndef SAFEFLOW_PIPELINE_H_
#define SAFEFLOW_PIPELINE_H_

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "safeflow/bilip.hpp"
#include "safeflow/env.hpp"
#include "safeflow/model_io.hpp"
#include "safeflow/roadmap.hpp"
#include "safeflow/train.hpp"

namespace safeflow {

struct GenDataConfig {
  std::optional<StateVec> goal;  // defaults to the workspace center
  int safe_count = 2500;         // RRT nodes, root included
  int unsafe_count = 2500;
  int k = 10;                    // k-NN graph degree
  double step = 0.0;             // RRT step; <= 0 selects 5% of the workspace diagonal
  double delta = 0.0;            // unsafe margin; <= 0 selects 0.1 * c_bar
  std::uint64_t seed = 0;

  void Validate() const;
};

struct GeneratedData {
  LabeledDatasets data;
  Roadmap roadmap;
  int dropped = 0;  // RRT nodes unreachable in the graph
  double step = 0.0;
};

// env -> RRT rooted at the goal -> k-NN graph -> cost-to-go -> labeled sets.
// Throws InputError("goal unsafe") when the goal is not in the safe set.
GeneratedData GenerateDatasets(const Environment& env, const GenDataConfig& config);

nlohmann::json DatasetSummary(const LabeledDatasets& data);

struct ModelConfig {
  BiLipConfig net{2, 16, 16, 0.7, 8, 0.9};
  double w1_std = 1.0;
  double w2_std = 0.1;
  double bias_range = 2.0;
  double in_extent = 15.0;       // half-diagonal of the safe box after input scaling
  double out_scale_factor = 3.0;  // multiplies the automatic output scale
  std::uint64_t init_seed = 0;    // derived from the training seed when 0

  void Validate() const;
};

struct TrainOutcome {
  PlannerModel model;
  TrainReport report;
  Calibration calibration;
};

// Builds a randomly initialized map, fits it to the data and calibrates the
// level set onto the unit sphere.
TrainOutcome TrainPlanner(const LabeledDatasets& data, const ModelConfig& model_config,
                          TrainConfig train_config);

}  // namespace safeflow

#endif  // SAFEFLOW_PIPELINE_H_
