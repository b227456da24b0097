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

#include "safeflow/roadmap.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <utility>

#include "safeflow/json_util.hpp"

namespace safeflow {

RrtTree RrtGrow(const Environment& env, const StateVec& root, int node_count,
                double step_size, std::uint64_t seed) {
  if (!env.IsSafe(root)) throw InputError("goal unsafe: RRT root is not safe");
  if (!(step_size > 0.0)) throw InputError("step_size must be > 0");
  if (node_count < 1) throw InputError("node_count must be >= 1");

  RrtTree tree;
  tree.nodes.push_back(root);
  tree.parent.push_back(-1);

  const Box& ws = env.workspace();
  const int n = env.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const long max_iter = 100L * node_count;
  StateVec sample(n);
  for (long it = 0; it < max_iter && static_cast<int>(tree.nodes.size()) < node_count;
       ++it) {
    for (int i = 0; i < n; ++i) {
      sample[i] = ws.min[i] + unit(rng) * (ws.max[i] - ws.min[i]);
    }
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const double d = (tree.nodes[i] - sample).squaredNorm();
      if (d < best) {
        best = d;
        nearest = static_cast<int>(i);
      }
    }
    const StateVec& from = tree.nodes[nearest];
    const double dist = std::sqrt(best);
    if (dist == 0.0) continue;
    StateVec to = dist <= step_size ? sample
                                    : StateVec(from + (step_size / dist) * (sample - from));
    if (!env.SegmentFree(from, to)) continue;
    tree.nodes.push_back(std::move(to));
    tree.parent.push_back(nearest);
  }
  if (static_cast<int>(tree.nodes.size()) < node_count) {
    throw InputError("RRT reached only " + std::to_string(tree.nodes.size()) +
                     " of " + std::to_string(node_count) + " nodes");
  }
  return tree;
}

Roadmap BuildKnnGraph(const Environment& env, const std::vector<StateVec>& nodes,
                      int k, int root_index) {
  if (k < 1) throw InputError("k must be >= 1");
  if (nodes.empty()) throw InputError("roadmap needs at least one node");
  if (root_index < 0 || root_index >= static_cast<int>(nodes.size())) {
    throw InputError("root index out of range");
  }
  Roadmap map;
  map.nodes = nodes;
  map.root_index = root_index;
  const int count = static_cast<int>(nodes.size());
  std::set<std::pair<int, int>> seen;
  std::vector<std::pair<double, int>> dist(count);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < count; ++j) {
      dist[j] = {j == i ? std::numeric_limits<double>::infinity()
                        : (nodes[i] - nodes[j]).squaredNorm(),
                 j};
    }
    const int take = std::min(k, count - 1);
    std::partial_sort(dist.begin(), dist.begin() + take, dist.end());
    for (int t = 0; t < take; ++t) {
      const int j = dist[t].second;
      const std::pair<int, int> key{std::min(i, j), std::max(i, j)};
      if (seen.count(key)) continue;
      if (!env.SegmentFree(nodes[i], nodes[j])) continue;
      seen.insert(key);
      map.edges.push_back({key.first, key.second, std::sqrt(dist[t].first)});
    }
  }
  return map;
}

void AddTreeEdges(Roadmap& roadmap, const RrtTree& tree) {
  std::set<std::pair<int, int>> seen;
  for (const Edge& e : roadmap.edges) seen.insert({e.i, e.j});
  for (std::size_t c = 0; c < tree.parent.size(); ++c) {
    const int p = tree.parent[c];
    if (p < 0) continue;
    const int child = static_cast<int>(c);
    const std::pair<int, int> key{std::min(p, child), std::max(p, child)};
    if (seen.count(key)) continue;
    seen.insert(key);
    roadmap.edges.push_back(
        {key.first, key.second, (tree.nodes[c] - tree.nodes[p]).norm()});
  }
}

CostToGo ComputeCostToGo(const Roadmap& roadmap) {
  const int count = static_cast<int>(roadmap.nodes.size());
  if (roadmap.root_index < 0 || roadmap.root_index >= count) {
    throw InputError("root index out of range");
  }
  std::vector<std::vector<std::pair<int, double>>> adj(count);
  for (const Edge& e : roadmap.edges) {
    adj[e.i].emplace_back(e.j, e.length);
    adj[e.j].emplace_back(e.i, e.length);
  }
  std::vector<double> dist(count, std::numeric_limits<double>::infinity());
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[roadmap.root_index] = 0.0;
  queue.emplace(0.0, roadmap.root_index);
  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    for (auto [v, w] : adj[u]) {
      if (d + w < dist[v]) {
        dist[v] = d + w;
        queue.emplace(dist[v], v);
      }
    }
  }
  CostToGo out;
  for (int i = 0; i < count; ++i) {
    if (std::isfinite(dist[i])) {
      out.node.push_back(i);
      out.label.push_back(dist[i]);
    } else {
      ++out.dropped;
    }
  }
  if (2 * out.dropped > count) {
    throw InputError("root unreachable from " + std::to_string(out.dropped) + " of " +
                     std::to_string(count) + " nodes; raise k");
  }
  return out;
}

LabeledDatasets AssembleDatasets(const std::vector<StateVec>& safe_points,
                                 const std::vector<double>& labels,
                                 const std::vector<StateVec>& unsafe_points,
                                 double delta) {
  if (!(delta > 0.0)) throw InputError("delta must be > 0");
  if (labels.empty() || labels.size() != safe_points.size()) {
    throw InputError("labels must be nonempty and match the safe points");
  }
  LabeledDatasets data;
  data.delta = delta;
  std::size_t goal = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(labels[i] >= 0.0) || !std::isfinite(labels[i])) {
      throw InputError("safe labels must be finite and nonnegative");
    }
    if (labels[i] < labels[goal]) goal = i;
    data.safe.push_back({safe_points[i], labels[i]});
  }
  data.c_bar = *std::max_element(labels.begin(), labels.end());
  data.goal = safe_points[goal];
  for (const StateVec& x : unsafe_points) {
    data.unsafe.push_back({x, data.c_bar + delta});
  }
  return data;
}

void WriteDatasetsJsonl(const LabeledDatasets& data, const std::string& path,
                        const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  nlohmann::json meta = {{"kind", "meta"},
                         {"version", kFileFormatVersion},
                         {"c_bar", data.c_bar},
                         {"delta", data.delta},
                         {"goal", VecToStd(data.goal)},
                         {"M", data.M()},
                         {"N", data.N()},
                         {"config", config}};
  out << meta.dump() << '\n';
  for (const auto& p : data.safe) {
    out << nlohmann::json{{"x", VecToStd(p.x)}, {"c", p.c}, {"kind", "safe"}}.dump()
        << '\n';
  }
  for (const auto& p : data.unsafe) {
    out << nlohmann::json{{"x", VecToStd(p.x)}, {"c", p.c}, {"kind", "unsafe"}}.dump()
        << '\n';
  }
}

LabeledDatasets ReadDatasetsJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  LabeledDatasets data;
  std::optional<double> delta;
  std::optional<StateVec> goal;
  std::string line;
  int line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "meta") {
        if (j.contains("delta")) delta = j.at("delta").get<double>();
        if (j.contains("goal")) goal = VecFromJson(j.at("goal"));
        continue;
      }
      LabeledPoint p{VecFromJson(j.at("x")), j.at("c").get<double>()};
      if (kind == "safe") {
        data.safe.push_back(std::move(p));
      } else if (kind == "unsafe") {
        data.unsafe.push_back(std::move(p));
      } else {
        throw InputError("unknown record kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
  }
  if (data.safe.empty()) throw InputError(path + ": no safe samples");
  std::size_t g = 0;
  data.c_bar = 0.0;
  for (std::size_t i = 0; i < data.safe.size(); ++i) {
    data.c_bar = std::max(data.c_bar, data.safe[i].c);
    if (data.safe[i].c < data.safe[g].c) g = i;
  }
  data.goal = goal ? *goal : data.safe[g].x;
  if (delta) {
    data.delta = *delta;
  } else if (!data.unsafe.empty()) {
    data.delta = data.unsafe.front().c - data.c_bar;
  }
  for (const auto& p : data.unsafe) {
    if (std::abs(p.c - (data.c_bar + data.delta)) > 1e-12 * (1.0 + data.c_bar)) {
      throw InputError(path + ": unsafe labels must all equal c_bar + delta");
    }
  }
  if (!(data.delta > 0.0)) throw InputError(path + ": delta must be > 0");
  return data;
}

void WriteDemoJsonl(const std::vector<DemoTriple>& demo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& d : demo) {
    out << nlohmann::json{{"x", VecToStd(d.x)},
                          {"x_star", VecToStd(d.x_star)},
                          {"xdot", VecToStd(d.xdot)}}
               .dump()
        << '\n';
  }
}

std::vector<DemoTriple> ReadDemoJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  std::vector<DemoTriple> demo;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      demo.push_back({VecFromJson(j.at("x")), VecFromJson(j.at("x_star")),
                      VecFromJson(j.at("xdot"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return demo;
}

}  // namespace safeflow
