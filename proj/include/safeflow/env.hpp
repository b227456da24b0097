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

#ifndef SAFEFLOW_ENV_H_
#define SAFEFLOW_ENV_H_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "safeflow/common.hpp"

namespace safeflow {

// Axis-aligned box [min, max].
struct Box {
  StateVec min;
  StateVec max;

  int dim() const { return static_cast<int>(min.size()); }
  StateVec center() const { return 0.5 * (min + max); }
  double diagonal() const { return (max - min).norm(); }
  bool Contains(const StateVec& x) const;         // closed
  bool ContainsInterior(const StateVec& x) const;  // open
};

struct Circle {
  StateVec center;
  double radius = 0.0;
};

using Obstacle = std::variant<Box, Circle>;

// A workspace box with obstacles carved out. The safe set is the closure of
// the workspace minus the obstacle interiors, so obstacle boundaries count as
// safe.
class Environment {
 public:
  // Validates the geometry and throws InputError on an empty workspace, an
  // obstacle that misses the workspace, or a disconnected safe set.
  Environment(Box workspace, std::vector<Obstacle> obstacles,
              double boundary_margin);

  // Workspace with no obstacles; boundary margin defaults to 20% of the
  // workspace diagonal.
  static Environment Open(Box workspace);

  // Built-in presets: "corridor-v1" (two-wall S corridor) and "unit-box"
  // ([-1,1]^2, no obstacles).
  static Environment Preset(const std::string& name);

  const Box& workspace() const { return workspace_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  double boundary_margin() const { return boundary_margin_; }
  int dim() const { return workspace_.dim(); }

  // Workspace inflated by boundary_margin on every side.
  Box SamplingBox() const;

  bool IsSafe(const StateVec& x) const;

  // True iff no point of the closed segment [a, b] is unsafe. Exact against
  // the box and circle primitives.
  bool SegmentFree(const StateVec& a, const StateVec& b) const;

  std::vector<StateVec> SampleSafe(std::size_t count, std::uint64_t seed) const;
  // Unsafe points are drawn from the inflated sampling box.
  std::vector<StateVec> SampleUnsafe(std::size_t count,
                                     std::uint64_t seed) const;

  // Number of 4-connected components of safe cell centers on a res x res grid
  // over the workspace. Two-dimensional workspaces only.
  int CountSafeComponents(int res = 256) const;

 private:
  Box workspace_;
  std::vector<Obstacle> obstacles_;
  double boundary_margin_;
};

inline constexpr int kMaxConsecutiveRejections = 1000000;

void to_json(nlohmann::json& j, const Environment& env);
Environment EnvironmentFromJson(const nlohmann::json& j);

// Loads a preset name or a JSON file path.
Environment LoadEnvironment(const std::string& preset_or_path);

}  // namespace safeflow

#endif  // SAFEFLOW_ENV_H_
