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

#ifndef SAFEFLOW_VERIFY_H_
#define SAFEFLOW_VERIFY_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "safeflow/bilip.hpp"
#include "safeflow/diffeo.hpp"
#include "safeflow/env.hpp"
#include "safeflow/flow.hpp"
#include "safeflow/model_io.hpp"

namespace safeflow {

// Outcome of one executable certificate. pass == (worst_margin >= -tolerance).
// Checks with asserted == false are reported but never fail a run.
struct CertificateReport {
  std::string name;
  double worst_margin = 0.0;
  double tolerance = 0.0;
  long samples = 0;
  std::uint64_t seed = 0;
  bool asserted = true;
  bool pass = true;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json ReportToJson(const CertificateReport& report);
nlohmann::json ReportsToJson(const std::vector<CertificateReport>& reports);
bool AllAssertedPass(const std::vector<CertificateReport>& reports);

// Points drawn uniformly from region with |g(x)| <= 1.
std::vector<StateVec> SampleLearnedSet(const Diffeo& g, const Box& region, std::size_t count,
                                       std::uint64_t seed);

// mu <= |g(a) - g(b)| / |a - b| <= nu over random pairs in region (half of them
// independent, half at short range). Without bounds only the empirical
// extrema are reported.
CertificateReport CheckBilip(const Diffeo& g, const std::optional<CertBounds>& bounds,
                             const Box& region, long pairs, std::uint64_t seed,
                             int threads = 1);

// Round trips |g(g^{-1}(z)) - z| <= 1e-8 for z uniform in the unit ball, at most
// max_iter iterations per block and observed contraction <= tau + 0.05.
CertificateReport CheckInversion(const BiLipMap& map, long count, std::uint64_t seed,
                                 int threads = 1);

// h = 1 - |g|^2 with hdot = -2 g^T G f evaluated through the natural field.
// "barrier_decay": hdot + 2 lambda h >= -1e-9 on every (sample, goal).
CertificateReport CheckBarrierDecay(const Diffeo& g, double lambda,
                                    const std::vector<StateVec>& samples,
                                    const std::vector<StateVec>& goals, std::uint64_t seed,
                                    int threads = 1);
// "barrier_exterior": hdot > 0 wherever 1 < |g(x)| <= 2.
CertificateReport CheckBarrierExterior(const Diffeo& g, double lambda,
                                       const std::vector<StateVec>& samples,
                                       const std::vector<StateVec>& goals,
                                       std::uint64_t seed, int threads = 1);

// |x(t) - x*| <= (nu/mu) e^{-lambda t} |x0 - x*| (1 + 1e-6) + tol/mu, where tol is
// the inversion tolerance recorded on each trajectory.
CertificateReport CheckConvergence(const std::vector<Trajectory>& trajectories,
                                   const CertBounds& bounds, double lambda);

// max |f| <= 2 lambda / mu (1 + 1e-9) over samples x goals.
CertificateReport CheckVelocity(const Diffeo& g, const CertBounds& bounds, double lambda,
                                const std::vector<StateVec>& samples,
                                const std::vector<StateVec>& goals, int threads = 1);
// Finite-time field: lambda/nu <= |f| <= lambda/mu outside the deadzone.
CertificateReport CheckFiniteTimeBand(const Diffeo& g, const CertBounds& bounds,
                                      const FlowConfig& cfg,
                                      const std::vector<StateVec>& samples,
                                      const std::vector<StateVec>& goals, int threads = 1);

// |g(x(t))| <= 1 + tol at every sample of every trajectory.
CertificateReport CheckLearnedSafety(const Diffeo& g, const std::vector<Trajectory>& trajectories,
                                     double tol = 1e-6);

// |x(t) - x*(t)| <= (nu/mu)(|e(0)| e^{-lambda t} + b/lambda) * 1.02 along a
// tracking rollout with goal-path speed b.
CertificateReport CheckTracking(const Trajectory& trajectory, const CertBounds& bounds,
                                double lambda, double b);

// Fraction of trajectories that never leave the true safe set. Reported
// against min_rate, not asserted.
CertificateReport CheckSafetyEnv(const Environment& env,
                                 const std::vector<Trajectory>& trajectories,
                                 double min_rate = 0.95);

// Shear-map comparison: the gradient flow leaves the unit ball for some pair
// while the natural flow stays within 1 + 1e-6.
CertificateReport CheckShearCounterexample(const ShearCompareReport& report);

struct SuiteOptions {
  std::uint64_t seed = 0;
  int threads = 1;
  long bilip_pairs = 100000;
  long inversion_count = 10000;
  long barrier_samples = 10000;
  long exterior_samples = 1000;
  int goals = 10;
  int rollouts = 100;
  int rollout_samples = 200;
  int grid = 100;
  double horizon = 0.0;  // <= 0 selects 6 / lambda
  double tracking_speed = 0.1;
  double env_min_rate = 0.95;
  bool shear_check = true;
};

// Runs every certificate on a planner model over env's sampling box.
std::vector<CertificateReport> RunSuite(const PlannerModel& model, const Environment& env,
                                        const SuiteOptions& options);

}  // namespace safeflow

#endif  // SAFEFLOW_VERIFY_H_
