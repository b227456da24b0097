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

#include <gtest/gtest.h>

#include "safeflow/bilip.hpp"
#include "safeflow/flow.hpp"
#include "safeflow/verify.hpp"

namespace safeflow {
namespace {

StateVec P(double x, double y) {
  StateVec v(2);
  v << x, y;
  return v;
}

BiLipMap IdentityMap() {
  BiLipConfig c;
  c.pairs = 2;
  c.width = 4;
  return BiLipMap::Identity(c);
}

Box Square(double r) { return Box{StateVec::Constant(2, -r), StateVec::Constant(2, r)}; }

TEST(Verify, IdentityRatiosAreOne) {
  const BiLipMap map = IdentityMap();
  // The certified bounds come from the Lipschitz budgets, not the zero
  // weights, so test against the exact ones.
  EXPECT_TRUE(CheckBilip(map, map.CertifiedBounds(), Square(1), 200, 1).pass);
  const CertificateReport r = CheckBilip(map, CertBounds{1.0, 1.0}, Square(1), 2000, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.worst_margin, 0.0, 1e-12);
  EXPECT_EQ(r.samples, 2000);
}

TEST(Verify, WrongBoundsFail) {
  const BiLipMap map = IdentityMap();
  const CertificateReport r = CheckBilip(map, CertBounds{1.1, 2.0}, Square(1), 100, 2);
  EXPECT_FALSE(r.pass);
}

TEST(Verify, BarrierDecayOnIdentity) {
  const BiLipMap map = IdentityMap();
  const auto samples = SampleLearnedSet(map, Square(1), 500, 3);
  for (const auto& x : samples) EXPECT_LE(x.norm(), 1.0);
  const CertificateReport r = CheckBarrierDecay(map, 1.0, samples, {P(0, 0), P(0.5, 0.2)}, 4);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.samples, 1000);
  // At the origin with the goal there, hdot = 0 and h = 1: margin 2 lambda.
  const CertificateReport o = CheckBarrierDecay(map, 1.5, {P(0, 0)}, {P(0, 0)}, 5);
  EXPECT_NEAR(o.worst_margin, 3.0, 1e-12);
}

TEST(Verify, ExteriorBarrierOnIdentity) {
  const BiLipMap map = IdentityMap();
  const CertificateReport r =
      CheckBarrierExterior(map, 1.0, {P(1.5, 0), P(0, -1.9), P(1.2, 1.2)}, {P(0.3, 0.3)}, 6);
  EXPECT_TRUE(r.pass);
}

TEST(Verify, VelocitySupremumOnIdentity) {
  const BiLipMap map = IdentityMap();
  const CertBounds b{1.0, 1.0};
  // |f| = lambda |x - x*| <= 2 lambda on the unit ball, attained at antipodes.
  const CertificateReport r = CheckVelocity(map, b, 1.0, {P(1, 0)}, {P(-1, 0)});
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.worst_margin, 0.0, 1e-9);
}

TEST(Verify, ConvergenceDetectsBadTrajectory) {
  const BiLipMap map = IdentityMap();
  FlowConfig cfg;
  cfg.inv_tol = 1e-12;
  Trajectory good = RolloutAnalytic(map, P(0.5, 0.5), P(0, 0), cfg, {0, 0.5, 1, 2});
  const CertBounds exact{1.0, 1.0};
  EXPECT_TRUE(CheckConvergence({good}, exact, 1.0).pass);
  Trajectory bad = good;
  bad.states[2] = P(0.5, 0.5);
  EXPECT_FALSE(CheckConvergence({bad}, exact, 1.0).pass);
}

TEST(Verify, LearnedSafetyFlagsExcursions) {
  Trajectory t;
  t.times = {0, 1};
  t.states = {P(0.5, 0), P(0.99, 0)};
  const BiLipMap map = IdentityMap();
  EXPECT_TRUE(CheckLearnedSafety(map, {t}).pass);
  t.states[1] = P(1.01, 0);
  EXPECT_FALSE(CheckLearnedSafety(map, {t}).pass);
}

TEST(Verify, SafetyEnvReportsFirstViolation) {
  const Environment env = Environment::Preset("corridor-v1");
  Trajectory a, b;
  a.times = b.times = {0, 1, 2};
  a.states = {P(0.5, 0.5), P(0.6, 0.5), P(0.7, 0.5)};
  b.states = {P(1.0, 0.5), P(1.3, 0.5), P(1.6, 0.5)};
  const CertificateReport r = CheckSafetyEnv(env, {a, b}, 0.95);
  EXPECT_FALSE(r.asserted);
  EXPECT_FALSE(r.pass);
  EXPECT_DOUBLE_EQ(r.details["trajectory_safe_rate"].get<double>(), 0.5);
  EXPECT_EQ(r.details["first_violation"]["trajectory"], 1);
  EXPECT_EQ(r.details["first_violation"]["sample"], 1);
  EXPECT_TRUE(AllAssertedPass({r}));
}

TEST(Verify, StationaryTrackingMatchesConvergence) {
  const BiLipMap map = IdentityMap();
  FlowConfig cfg;
  cfg.step = 0.01;
  const GoalPath path({0.0, 5.0}, {P(0, 0), P(0, 0)});
  const Trajectory t = TrackingRollout(map, P(0.6, -0.2), path, 3.0, cfg);
  const CertificateReport r = CheckTracking(t, map.CertifiedBounds(), 1.0, 0.0);
  EXPECT_TRUE(r.pass);
  Trajectory plain;
  plain.states = t.states;
  plain.times = t.times;
  EXPECT_THROW(CheckTracking(plain, map.CertifiedBounds(), 1.0, 0.0), InputError);
}

TEST(Verify, SuiteOnIdentityModel) {
  PlannerModel model{IdentityMap()};
  model.map.SetGoalCenter(P(0, 0));
  SuiteOptions o;
  o.seed = 17;
  o.bilip_pairs = 2000;
  o.inversion_count = 500;
  o.barrier_samples = 500;
  o.exterior_samples = 100;
  o.goals = 3;
  o.rollouts = 10;
  o.grid = 30;
  o.shear_check = false;
  const auto reports = RunSuite(model, Environment::Preset("unit-box"), o);
  for (const auto& r : reports) EXPECT_TRUE(r.pass || !r.asserted) << r.name;
  EXPECT_TRUE(AllAssertedPass(reports));
  EXPECT_EQ(ReportsToJson(reports).size(), reports.size());
  const auto again = RunSuite(model, Environment::Preset("unit-box"), o);
  EXPECT_EQ(ReportsToJson(again), ReportsToJson(reports));
}

}  // namespace
}  // namespace safeflow
