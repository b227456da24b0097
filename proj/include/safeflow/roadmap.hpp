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

#ifndef SAFEFLOW_ROADMAP_H_
#define SAFEFLOW_ROADMAP_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safeflow/common.hpp"
#include "safeflow/env.hpp"

namespace safeflow {

// RRT grown from a single root. parent[0] == -1 for the root.
struct RrtTree {
  std::vector<StateVec> nodes;
  std::vector<int> parent;
};

struct Edge {
  int i = 0;
  int j = 0;
  double length = 0.0;
};

struct Roadmap {
  std::vector<StateVec> nodes;
  std::vector<Edge> edges;  // i < j, deduplicated
  int root_index = 0;
};

// Standard RRT: uniform sample, steer from nearest node by at most
// step_size, keep the new node if the segment is free. Returns exactly
// node_count nodes including the root. Throws InputError if the root is
// unsafe or node_count is not reached within 100 * node_count iterations.
RrtTree RrtGrow(const Environment& env, const StateVec& root, int node_count,
                double step_size, std::uint64_t seed);

// Links each node to its k nearest neighbours when the segment between them
// is free. Edges are symmetric and deduplicated.
Roadmap BuildKnnGraph(const Environment& env, const std::vector<StateVec>& nodes,
                      int k, int root_index = 0);

// Adds the tree's parent links to the graph (they are collision-free by
// construction), which keeps every tree node reachable from the root.
void AddTreeEdges(Roadmap& roadmap, const RrtTree& tree);

struct CostToGo {
  std::vector<int> node;       // indices of reachable nodes
  std::vector<double> label;   // shortest-path length to the root
  int dropped = 0;             // unreachable nodes
};

// Dijkstra from the root. Unreachable nodes are dropped; throws InputError if
// more than half of the nodes are unreachable.
CostToGo ComputeCostToGo(const Roadmap& roadmap);

struct LabeledPoint {
  StateVec x;
  double c = 0.0;
};

struct DemoTriple {
  StateVec x;
  StateVec x_star;
  StateVec xdot;
};

struct LabeledDatasets {
  std::vector<LabeledPoint> safe;
  std::vector<LabeledPoint> unsafe;
  std::vector<DemoTriple> demo;
  double c_bar = 0.0;
  double delta = 0.0;
  StateVec goal;  // the safe sample carrying label 0

  std::size_t M() const { return safe.size(); }
  std::size_t N() const { return unsafe.size(); }
  std::size_t K() const { return demo.size(); }
};

// c_bar = max label; every unsafe point gets c_bar + delta. The goal is the
// safe point with the smallest label. Throws InputError unless delta > 0 and
// the labels are nonempty.
LabeledDatasets AssembleDatasets(const std::vector<StateVec>& safe_points,
                                 const std::vector<double>& labels,
                                 const std::vector<StateVec>& unsafe_points,
                                 double delta);

// JSON-lines: {"x":[..],"c":..,"kind":"safe"|"unsafe"}, after one "meta"
// record holding the version, c_bar, delta, goal and the producing config.
void WriteDatasetsJsonl(const LabeledDatasets& data, const std::string& path,
                        const nlohmann::json& config = nlohmann::json::object());
LabeledDatasets ReadDatasetsJsonl(const std::string& path);
// JSON-lines: {"x":[..],"x_star":[..],"xdot":[..]}.
void WriteDemoJsonl(const std::vector<DemoTriple>& demo, const std::string& path);
std::vector<DemoTriple> ReadDemoJsonl(const std::string& path);

}  // namespace safeflow

#endif  // SAFEFLOW_ROADMAP_H_
