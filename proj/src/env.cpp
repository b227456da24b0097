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

#include "safeflow/env.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <random>
#include <utility>

#include "safeflow/json_util.hpp"

namespace safeflow {
namespace {

bool BoxIntersectsBox(const Box& a, const Box& b) {
  for (int i = 0; i < a.dim(); ++i) {
    if (a.max[i] <= b.min[i] || b.max[i] <= a.min[i]) return false;
  }
  return true;
}

double DistanceToBox(const StateVec& p, const Box& box) {
  const StateVec clamped = p.cwiseMax(box.min).cwiseMin(box.max);
  return (p - clamped).norm();
}

// Closest distance between point c and the closed segment [a, b].
double PointSegmentDistance(const StateVec& c, const StateVec& a,
                            const StateVec& b) {
  const StateVec d = b - a;
  const double len2 = d.squaredNorm();
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((c - a).dot(d) / len2, 0.0, 1.0);
  return (a + t * d - c).norm();
}

// Does the closed segment [a, b] meet the open box?
bool SegmentHitsOpenBox(const StateVec& a, const StateVec& b, const Box& box) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  const StateVec d = b - a;
  for (int i = 0; i < a.size(); ++i) {
    if (d[i] == 0.0) {
      if (!(box.min[i] < a[i] && a[i] < box.max[i])) return false;
      continue;
    }
    double t1 = (box.min[i] - a[i]) / d[i];
    double t2 = (box.max[i] - a[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    lo = std::max(lo, t1);
    hi = std::min(hi, t2);
  }
  // Open interval (lo, hi) against the closed parameter range [0, 1].
  return lo < hi && lo < 1.0 && hi > 0.0;
}

struct ObstacleInterior {
  const StateVec& x;
  bool operator()(const Box& b) const { return b.ContainsInterior(x); }
  bool operator()(const Circle& c) const {
    return (x - c.center).norm() < c.radius;
  }
};

void CheckFiniteVec(const StateVec& v, int dim, const char* what) {
  if (v.size() != dim || !v.allFinite()) {
    throw InputError(std::string("invalid ") + what);
  }
}

}  // namespace

bool Box::Contains(const StateVec& x) const {
  return (x.array() >= min.array()).all() && (x.array() <= max.array()).all();
}

bool Box::ContainsInterior(const StateVec& x) const {
  return (x.array() > min.array()).all() && (x.array() < max.array()).all();
}

Environment::Environment(Box workspace, std::vector<Obstacle> obstacles,
                         double boundary_margin)
    : workspace_(std::move(workspace)),
      obstacles_(std::move(obstacles)),
      boundary_margin_(boundary_margin) {
  const int n = workspace_.dim();
  if (n < 1 || workspace_.max.size() != n || !workspace_.min.allFinite() ||
      !workspace_.max.allFinite()) {
    throw InputError("workspace bounds malformed");
  }
  if ((workspace_.max.array() <= workspace_.min.array()).any()) {
    throw InputError("empty workspace");
  }
  if (!(boundary_margin_ >= 0.0) || !std::isfinite(boundary_margin_)) {
    throw InputError("boundary_margin must be finite and nonnegative");
  }
  for (const Obstacle& ob : obstacles_) {
    if (const auto* b = std::get_if<Box>(&ob)) {
      CheckFiniteVec(b->min, n, "obstacle box");
      CheckFiniteVec(b->max, n, "obstacle box");
      if ((b->max.array() <= b->min.array()).any()) {
        throw InputError("obstacle box has no interior");
      }
      if (!BoxIntersectsBox(*b, workspace_)) {
        throw InputError("obstacle does not intersect the workspace");
      }
    } else {
      const auto& c = std::get<Circle>(ob);
      CheckFiniteVec(c.center, n, "obstacle circle");
      if (!(c.radius > 0.0)) throw InputError("circle radius must be > 0");
      if (DistanceToBox(c.center, workspace_) >= c.radius) {
        throw InputError("obstacle does not intersect the workspace");
      }
    }
  }
  if (n == 2 && CountSafeComponents() != 1) {
    throw InputError("disconnected safe set");
  }
}

Environment Environment::Open(Box workspace) {
  const double margin = 0.2 * workspace.diagonal();
  return Environment(std::move(workspace), {}, margin);
}

Environment Environment::Preset(const std::string& name) {
  if (name == "corridor-v1") {
    // Two walls leave an S-shaped passage through three chambers. Both walls
    // overhang the workspace so the safe set stays simply connected.
    Box ws{StateVec::Zero(2), StateVec(2)};
    ws.max << 4.0, 2.0;
    Box lower{StateVec(2), StateVec(2)};
    lower.min << 1.2, -0.5;
    lower.max << 1.5, 1.3;
    Box upper{StateVec(2), StateVec(2)};
    upper.min << 2.5, 0.7;
    upper.max << 2.8, 2.5;
    const double margin = 0.2 * ws.diagonal();
    return Environment(ws, {lower, upper}, margin);
  }
  if (name == "unit-box") {
    return Open(Box{StateVec::Constant(2, -1.0), StateVec::Constant(2, 1.0)});
  }
  throw InputError("unknown environment preset '" + name + "'");
}

Box Environment::SamplingBox() const {
  return Box{workspace_.min.array() - boundary_margin_,
             workspace_.max.array() + boundary_margin_};
}

bool Environment::IsSafe(const StateVec& x) const {
  if (x.size() != dim() || !x.allFinite()) return false;
  if (!workspace_.Contains(x)) return false;
  for (const Obstacle& ob : obstacles_) {
    if (std::visit(ObstacleInterior{x}, ob)) return false;
  }
  return true;
}

bool Environment::SegmentFree(const StateVec& a, const StateVec& b) const {
  // The workspace is convex, so both endpoints inside suffices for it.
  if (!workspace_.Contains(a) || !workspace_.Contains(b)) return false;
  for (const Obstacle& ob : obstacles_) {
    if (const auto* box = std::get_if<Box>(&ob)) {
      if (SegmentHitsOpenBox(a, b, *box)) return false;
    } else {
      const auto& c = std::get<Circle>(ob);
      if (PointSegmentDistance(c.center, a, b) < c.radius) return false;
    }
  }
  return true;
}

namespace {

template <typename Accept>
std::vector<StateVec> RejectionSample(const Box& region, std::size_t count,
                                      std::uint64_t seed, Accept accept) {
  if (count < 1) throw InputError("sample count must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<StateVec> out;
  out.reserve(count);
  const int n = region.dim();
  int rejections = 0;
  StateVec x(n);
  while (out.size() < count) {
    for (int i = 0; i < n; ++i) {
      x[i] = region.min[i] + unit(rng) * (region.max[i] - region.min[i]);
    }
    if (accept(x)) {
      out.push_back(x);
      rejections = 0;
    } else if (++rejections >= kMaxConsecutiveRejections) {
      throw InputError("sampling failed: 1e6 consecutive rejections");
    }
  }
  return out;
}

}  // namespace

std::vector<StateVec> Environment::SampleSafe(std::size_t count,
                                              std::uint64_t seed) const {
  return RejectionSample(workspace_, count, seed,
                         [this](const StateVec& x) { return IsSafe(x); });
}

std::vector<StateVec> Environment::SampleUnsafe(std::size_t count,
                                                std::uint64_t seed) const {
  return RejectionSample(SamplingBox(), count, seed,
                         [this](const StateVec& x) { return !IsSafe(x); });
}

int Environment::CountSafeComponents(int res) const {
  if (dim() != 2) throw InputError("grid connectivity needs a 2D workspace");
  const StateVec cell = (workspace_.max - workspace_.min) / res;
  std::vector<int> label(static_cast<std::size_t>(res) * res, -1);
  auto idx = [res](int i, int j) { return static_cast<std::size_t>(i) * res + j; };
  StateVec p(2);
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      p << workspace_.min[0] + (i + 0.5) * cell[0],
          workspace_.min[1] + (j + 0.5) * cell[1];
      if (!IsSafe(p)) label[idx(i, j)] = -2;
    }
  }
  int components = 0;
  std::queue<std::pair<int, int>> frontier;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      if (label[idx(i, j)] != -1) continue;
      label[idx(i, j)] = components;
      frontier.emplace(i, j);
      while (!frontier.empty()) {
        auto [ci, cj] = frontier.front();
        frontier.pop();
        constexpr int kDi[] = {1, -1, 0, 0};
        constexpr int kDj[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ni = ci + kDi[k];
          const int nj = cj + kDj[k];
          if (ni < 0 || nj < 0 || ni >= res || nj >= res) continue;
          if (label[idx(ni, nj)] != -1) continue;
          label[idx(ni, nj)] = components;
          frontier.emplace(ni, nj);
        }
      }
      ++components;
    }
  }
  return components;
}

void to_json(nlohmann::json& j, const Environment& env) {
  j = nlohmann::json::object();
  j["version"] = kFileFormatVersion;
  j["workspace"] = {{"min", VecToStd(env.workspace().min)},
                    {"max", VecToStd(env.workspace().max)}};
  j["obstacles"] = nlohmann::json::array();
  for (const Obstacle& ob : env.obstacles()) {
    if (const auto* b = std::get_if<Box>(&ob)) {
      j["obstacles"].push_back(
          {{"type", "rect"}, {"min", VecToStd(b->min)}, {"max", VecToStd(b->max)}});
    } else {
      const auto& c = std::get<Circle>(ob);
      j["obstacles"].push_back({{"type", "circle"},
                                {"center", VecToStd(c.center)},
                                {"radius", c.radius}});
    }
  }
  j["boundary_margin"] = env.boundary_margin();
}

Environment EnvironmentFromJson(const nlohmann::json& j) {
  try {
    Box ws{VecFromJson(j.at("workspace").at("min")),
           VecFromJson(j.at("workspace").at("max"))};
    std::vector<Obstacle> obstacles;
    if (j.contains("obstacles")) {
      for (const auto& o : j.at("obstacles")) {
        const std::string type = o.at("type").get<std::string>();
        if (type == "rect") {
          obstacles.emplace_back(Box{VecFromJson(o.at("min")), VecFromJson(o.at("max"))});
        } else if (type == "circle") {
          obstacles.emplace_back(
              Circle{VecFromJson(o.at("center")), o.at("radius").get<double>()});
        } else {
          throw InputError("unknown obstacle type '" + type + "'");
        }
      }
    }
    const double margin = j.contains("boundary_margin")
                              ? j.at("boundary_margin").get<double>()
                              : 0.2 * ws.diagonal();
    return Environment(std::move(ws), std::move(obstacles), margin);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed environment JSON: ") + e.what());
  }
}

Environment LoadEnvironment(const std::string& preset_or_path) {
  std::ifstream in(preset_or_path);
  if (!in) return Environment::Preset(preset_or_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse " + preset_or_path + ": " + e.what());
  }
  return EnvironmentFromJson(j);
}

}  // namespace safeflow
