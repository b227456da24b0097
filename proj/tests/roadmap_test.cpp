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


#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "safeflow/roadmap.hpp"

namespace safeflow {
namespace {

StateVec P(double x, double y) {
  StateVec v(2);
  v << x, y;
  return v;
}

Environment OpenSquare() { return Environment(Box{P(0, 0), P(1, 1)}, {}, 0.2); }

// Plain Bellman-Ford over an undirected edge list.
std::vector<double> BellmanFord(const Roadmap& rm) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(rm.nodes.size(), inf);
  d[rm.root_index] = 0.0;
  for (std::size_t it = 0; it < rm.nodes.size(); ++it) {
    for (const Edge& e : rm.edges) {
      d[e.j] = std::min(d[e.j], d[e.i] + e.length);
      d[e.i] = std::min(d[e.i], d[e.j] + e.length);
    }
  }
  return d;
}

TEST(Roadmap, SingleNodeTreeIsRoot) {
  const auto tree = RrtGrow(OpenSquare(), P(0.5, 0.5), 1, 0.1, 1);
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0], P(0.5, 0.5));
  EXPECT_EQ(tree.parent[0], -1);
}

TEST(Roadmap, OpenTreeStaysInWorkspace) {
  const Environment env = OpenSquare();
  const auto tree = RrtGrow(env, P(0.2, 0.3), 100, 0.1, 2);
  ASSERT_EQ(tree.nodes.size(), 100u);
  for (const auto& x : tree.nodes) {
    EXPECT_TRUE(env.IsSafe(x));
    EXPECT_TRUE(env.workspace().Contains(x));
  }
}

TEST(Roadmap, CorridorTreeEdgesAreFree) {
  const Environment env = Environment::Preset("corridor-v1");
  const auto tree = RrtGrow(env, P(2.0, 1.0), 2500, 0.05 * env.workspace().diagonal(), 3);
  ASSERT_EQ(tree.nodes.size(), 2500u);
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    ASSERT_GE(tree.parent[i], 0);
    EXPECT_TRUE(env.SegmentFree(tree.nodes[i], tree.nodes[tree.parent[i]]));
  }
}

TEST(Roadmap, UnsafeRootIsRejected) {
  const Environment env = Environment::Preset("corridor-v1");
  EXPECT_THROW(RrtGrow(env, P(1.35, 0.5), 10, 0.1, 1), InputError);
}

TEST(Roadmap, TwoVisibleNodesShareOneEdge) {
  const Roadmap rm = BuildKnnGraph(OpenSquare(), {P(0.1, 0.1), P(0.4, 0.5)}, 1);
  ASSERT_EQ(rm.edges.size(), 1u);
  EXPECT_DOUBLE_EQ(rm.edges[0].length, 0.5);
}

TEST(Roadmap, ObstacleBlocksEdge) {
  Box wall{P(0.55, 0.3), P(0.65, 0.7)};
  const Environment env(Box{P(0, 0), P(1, 1)}, {wall}, 0.2);
  const Roadmap rm = BuildKnnGraph(env, {P(0.1, 0.5), P(0.4, 0.5), P(0.9, 0.5)}, 2);
  bool has01 = false;
  for (const Edge& e : rm.edges) {
    EXPECT_FALSE(e.i == 1 && e.j == 2);
    EXPECT_FALSE(e.i == 0 && e.j == 2);
    has01 |= e.i == 0 && e.j == 1;
  }
  EXPECT_TRUE(has01);
}

TEST(Roadmap, FullDegreeGivesCompleteGraph) {
  const Environment env = OpenSquare();
  const auto pts = env.SampleSafe(12, 4);
  const Roadmap rm = BuildKnnGraph(env, pts, 11);
  EXPECT_EQ(rm.edges.size(), 12u * 11u / 2u);
  for (const Edge& e : rm.edges) {
    EXPECT_LT(e.i, e.j);
    EXPECT_DOUBLE_EQ(e.length, (pts[e.i] - pts[e.j]).norm());
  }
}

Roadmap Manual(int nodes, std::vector<Edge> edges) {
  Roadmap rm;
  for (int i = 0; i < nodes; ++i) rm.nodes.push_back(P(i, 0));
  rm.edges = std::move(edges);
  return rm;
}

TEST(Roadmap, ChainLabels) {
  const CostToGo c = ComputeCostToGo(Manual(3, {{0, 1, 1.0}, {1, 2, 1.0}}));
  ASSERT_EQ(c.label.size(), 3u);
  EXPECT_EQ(c.label[0], 0.0);
  EXPECT_EQ(c.label[1], 1.0);
  EXPECT_EQ(c.label[2], 2.0);
}

TEST(Roadmap, TriangleTakesShortcut) {
  const CostToGo c = ComputeCostToGo(Manual(3, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 3.0}}));
  EXPECT_EQ(c.label[2], 2.0);
}

TEST(Roadmap, IsolatedNodeIsDropped) {
  const CostToGo c = ComputeCostToGo(Manual(3, {{0, 1, 1.0}}));
  EXPECT_EQ(c.dropped, 1);
  EXPECT_EQ(c.node, (std::vector<int>{0, 1}));
}

TEST(Roadmap, DijkstraMatchesBellmanFord) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> len(0.1, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + trial % 46;
    std::vector<Edge> edges;
    for (int i = 1; i < n; ++i) {
      std::uniform_int_distribution<int> pick(0, i - 1);
      edges.push_back({pick(rng), i, len(rng)});
    }
    for (int k = 0; k < n; ++k) {
      std::uniform_int_distribution<int> pick(0, n - 1);
      int a = pick(rng), b = pick(rng);
      if (a == b) continue;
      edges.push_back({std::min(a, b), std::max(a, b), len(rng)});
    }
    const Roadmap rm = Manual(n, edges);
    const auto oracle = BellmanFord(rm);
    const CostToGo c = ComputeCostToGo(rm);
    ASSERT_EQ(static_cast<int>(c.node.size()), n);
    for (std::size_t i = 0; i < c.node.size(); ++i) {
      EXPECT_NEAR(c.label[i], oracle[c.node[i]], 1e-12);
    }
  }
}

TEST(Roadmap, CorridorLabelsObeyTriangleInequality) {
  const Environment env = Environment::Preset("corridor-v1");
  const auto tree = RrtGrow(env, P(2.0, 1.0), 600, 0.2, 5);
  Roadmap rm = BuildKnnGraph(env, tree.nodes, 10, 0);
  AddTreeEdges(rm, tree);
  for (const Edge& e : rm.edges) EXPECT_TRUE(env.SegmentFree(rm.nodes[e.i], rm.nodes[e.j]));
  const CostToGo c = ComputeCostToGo(rm);
  EXPECT_EQ(c.dropped, 0);
  std::vector<double> label(rm.nodes.size());
  int zeros = 0;
  for (std::size_t i = 0; i < c.node.size(); ++i) {
    label[c.node[i]] = c.label[i];
    EXPECT_GE(c.label[i], 0.0);
    zeros += c.label[i] == 0.0;
  }
  EXPECT_EQ(zeros, 1);
  EXPECT_EQ(label[0], 0.0);
  for (const Edge& e : rm.edges) {
    EXPECT_LE(std::abs(label[e.i] - label[e.j]), e.length + 1e-9);
  }
}

TEST(Roadmap, AssembleDatasetsFormula) {
  const LabeledDatasets d = AssembleDatasets({P(0, 0), P(1, 0), P(2, 0)}, {0.0, 1.0, 2.0},
                                             {P(5, 5), P(6, 6)}, 0.5);
  EXPECT_EQ(d.c_bar, 2.0);
  EXPECT_EQ(d.M(), 3u);
  EXPECT_EQ(d.N(), 2u);
  for (const auto& p : d.unsafe) EXPECT_EQ(p.c, 2.5);
  EXPECT_EQ(d.goal, P(0, 0));
}

TEST(Roadmap, AssembleWithoutUnsafeSamples) {
  const LabeledDatasets d = AssembleDatasets({P(0, 0)}, {0.0}, {}, 0.5);
  EXPECT_EQ(d.N(), 0u);
}

TEST(Roadmap, AssembleRejectsZeroDelta) {
  EXPECT_THROW(AssembleDatasets({P(0, 0)}, {0.0}, {}, 0.0), InputError);
  EXPECT_THROW(AssembleDatasets({}, {}, {}, 0.5), InputError);
}

TEST(Roadmap, JsonlRoundTrip) {
  const LabeledDatasets d = AssembleDatasets({P(0, 0), P(1, 0.25)}, {0.0, 1.0 / 3.0},
                                             {P(5, 5)}, 0.1);
  const std::string path =
      (std::filesystem::temp_directory_path() / "safeflow_roadmap_test.jsonl").string();
  WriteDatasetsJsonl(d, path, {{"seed", 3}});
  const LabeledDatasets back = ReadDatasetsJsonl(path);
  ASSERT_EQ(back.M(), d.M());
  ASSERT_EQ(back.N(), d.N());
  EXPECT_EQ(back.safe[1].c, d.safe[1].c);
  EXPECT_EQ(back.safe[1].x, d.safe[1].x);
  EXPECT_EQ(back.c_bar, d.c_bar);
  EXPECT_EQ(back.delta, d.delta);
  EXPECT_EQ(back.goal, d.goal);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace safeflow
