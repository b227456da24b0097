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

#ifndef SAFEFLOW_JSON_UTIL_H_
#define SAFEFLOW_JSON_UTIL_H_

#include <vector>

#include "json.hpp"
#include "safeflow/common.hpp"

namespace safeflow {

inline std::vector<double> VecToStd(const StateVec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline StateVec VecFromJson(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const StateVec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Column-major flattening, matching Eigen's storage.
inline std::vector<double> MatToStd(const Mat& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

inline Mat MatFromJson(const nlohmann::json& j, Eigen::Index rows,
                       Eigen::Index cols) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw InputError("matrix entry count mismatch");
  }
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

}  // namespace safeflow

#endif  // SAFEFLOW_JSON_UTIL_H_
