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


#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "safeflow/env.hpp"

namespace safeflow {
namespace {

StateVec P(double x, double y) {
  StateVec v(2);
  v << x, y;
  return v;
}

Box UnitSquare() { return Box{P(0, 0), P(1, 1)}; }

// Exact distance from c to the segment [a, b].
double SegmentPointDistance(const StateVec& a, const StateVec& b, const StateVec& c) {
  const StateVec d = b - a;
  const double t = std::clamp((c - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (a + t * d - c).norm();
}

TEST(Env, EmptyObstacleListKeepsWholeSquareSafe) {
  const Environment env(UnitSquare(), {}, 0.0);
  EXPECT_TRUE(env.IsSafe(P(0.5, 0.5)));
  EXPECT_TRUE(env.IsSafe(P(0.0, 1.0)));
  EXPECT_FALSE(env.IsSafe(P(1.01, 0.5)));
}

TEST(Env, CorridorPresetIsConnected) {
  const Environment env = Environment::Preset("corridor-v1");
  EXPECT_EQ(env.CountSafeComponents(256), 1);
  EXPECT_EQ(env.obstacles().size(), 2u);
}

TEST(Env, SeparatingSlabIsRejected) {
  Box slab{P(0.4, -0.1), P(0.6, 1.1)};
  try {
    Environment env(UnitSquare(), {slab}, 0.0);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("disconnected safe set"), std::string::npos);
  }
}

TEST(Env, ObstacleMissingWorkspaceIsRejected) {
  Box far{P(3, 3), P(4, 4)};
  EXPECT_THROW(Environment(UnitSquare(), {far}, 0.0), InputError);
}

TEST(Env, ObstacleInteriorUnsafeEdgeSafe) {
  Box ob{P(0.4, 0.4), P(0.6, 0.6)};
  const Environment env(UnitSquare(), {ob}, 0.0);
  EXPECT_FALSE(env.IsSafe(P(0.5, 0.5)));
  EXPECT_TRUE(env.IsSafe(P(0.4, 0.5)));
  EXPECT_TRUE(env.IsSafe(P(0.6, 0.6)));
}

TEST(Env, SegmentQueries) {
  const Environment open(UnitSquare(), {}, 0.0);
  EXPECT_TRUE(open.SegmentFree(P(0.1, 0.1), P(0.9, 0.8)));
  Box ob{P(0.4, 0.4), P(0.6, 0.6)};
  const Environment env(UnitSquare(), {ob}, 0.0);
  EXPECT_FALSE(env.SegmentFree(P(0.1, 0.5), P(0.9, 0.5)));
  // Running along an obstacle face stays in the closed safe set.
  EXPECT_TRUE(env.SegmentFree(P(0.1, 0.4), P(0.9, 0.4)));
}

TEST(Env, TangentSegmentGrazesCircle) {
  // Dyadic values keep the tangency exact in floating point.
  Circle c{P(0.5, 0.5), 0.25};
  const Environment env(UnitSquare(), {c}, 0.0);
  const StateVec a = P(0.125, 0.75);
  const StateVec b = P(0.875, 0.75);
  EXPECT_EQ(SegmentPointDistance(a, b, c.center), c.radius);
  EXPECT_TRUE(env.SegmentFree(a, b));
  EXPECT_FALSE(env.SegmentFree(P(0.125, 0.74), P(0.875, 0.74)));
}

TEST(Env, SegmentCircleAgreesWithDistanceOracle) {
  Circle c{P(0.5, 0.5), 0.2};
  const Environment env(UnitSquare(), {c}, 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 5000; ++i) {
    const StateVec a = P(u(rng), u(rng));
    const StateVec b = P(u(rng), u(rng));
    const double d = SegmentPointDistance(a, b, c.center);
    if (std::abs(d - c.radius) < 1e-9) continue;  // too close to call
    EXPECT_EQ(env.SegmentFree(a, b), d >= c.radius) << a.transpose() << " " << b.transpose();
    ++checked;
  }
  EXPECT_GT(checked, 4900);
}

TEST(Env, UnsafeSamplingNeedsUnsafeRegion) {
  const Environment env(UnitSquare(), {}, 0.0);
  EXPECT_THROW(env.SampleUnsafe(10, 1), InputError);
}

TEST(Env, SamplingIsDeterministic) {
  const Environment env = Environment::Preset("corridor-v1");
  const auto a = env.SampleSafe(200, 11);
  const auto b = env.SampleSafe(200, 11);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  const auto c = env.SampleSafe(200, 12);
  EXPECT_NE(a[0], c[0]);
}

TEST(Env, CorridorSamplesRespectMembership) {
  const Environment env = Environment::Preset("corridor-v1");
  for (const auto& x : env.SampleSafe(2500, 3)) {
    EXPECT_TRUE(env.IsSafe(x));
    EXPECT_TRUE(env.workspace().Contains(x));
  }
  const Box region = env.SamplingBox();
  for (const auto& x : env.SampleUnsafe(2500, 4)) {
    EXPECT_FALSE(env.IsSafe(x));
    EXPECT_TRUE(region.Contains(x));
  }
}

TEST(Env, FreeSegmentsHaveSafeSamplePoints) {
  const Environment env = Environment::Preset("corridor-v1");
  const auto pts = env.SampleSafe(400, 9);
  int free_count = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); i += 2) {
    if (!env.SegmentFree(pts[i], pts[i + 1])) continue;
    ++free_count;
    for (int k = 0; k < 1000; ++k) {
      const double t = k / 999.0;
      ASSERT_TRUE(env.IsSafe((1 - t) * pts[i] + t * pts[i + 1]));
    }
  }
  EXPECT_GT(free_count, 20);
}

TEST(Env, MembershipIgnoresObstacleOrder) {
  Box a{P(0.1, 0.1), P(0.3, 0.3)};
  Circle c{P(0.7, 0.7), 0.15};
  const Environment e1(UnitSquare(), {a, c}, 0.1);
  const Environment e2(UnitSquare(), {c, a}, 0.1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  for (int i = 0; i < 2000; ++i) {
    const StateVec x = P(u(rng), u(rng));
    EXPECT_EQ(e1.IsSafe(x), e2.IsSafe(x));
  }
}

TEST(Env, JsonRoundTrip) {
  const Environment env = Environment::Preset("corridor-v1");
  nlohmann::json j = env;
  const Environment back = EnvironmentFromJson(j);
  EXPECT_EQ(back.obstacles().size(), env.obstacles().size());
  EXPECT_DOUBLE_EQ(back.boundary_margin(), env.boundary_margin());
  EXPECT_EQ(back.workspace().max, env.workspace().max);
}

}  // namespace
}  // namespace safeflow
