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

#ifndef SAFEFLOW_FLOW_H_
#define SAFEFLOW_FLOW_H_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "safeflow/common.hpp"
#include "safeflow/diffeo.hpp"

namespace safeflow {

struct FlowConfig {
  double lambda = 1.0;
  double inv_tol = 1e-9;
  double step = 0.0;     // RK4 step; <= 0 selects min(0.01, 0.1 / lambda)
  double eps_ft = 1e-3;  // finite-time deadzone radius in Z-space

  double rk4_step() const { return step > 0.0 ? step : std::min(0.01, 0.1 / lambda); }
  void Validate() const;
};

// Piecewise-linear goal path through timestamped waypoints; held constant
// outside the waypoint range.
class GoalPath {
 public:
  GoalPath(std::vector<double> times, std::vector<StateVec> points);

  StateVec At(double t) const;
  // Largest segment speed.
  double MaxSpeed() const;
  const std::vector<double>& times() const { return times_; }
  const std::vector<StateVec>& points() const { return points_; }

 private:
  std::vector<double> times_;
  std::vector<StateVec> points_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVec> states;
  StateVec goal;                     // fixed goal, or the final goal of a path
  std::optional<GoalPath> goal_path;
  std::vector<StateVec> tracking_error;  // x(t) - x*(t) for goal paths
  double lambda = 1.0;
  double tol = 0.0;
  std::string method;
};

using VectorField = std::function<StateVec(double t, const StateVec& x)>;

// f = G(x)^{-1} lambda (g(x*) - g(x)), the natural gradient flow of
// V = lambda/2 |g(x) - g(x*)|^2. Throws NumericalError when cond(G) exceeds
// ten times the certified distortion.
StateVec NaturalField(const Diffeo& g, const StateVec& x, const StateVec& x_star,
                      double lambda);
// Same field with the goal image z* = g(x*) precomputed.
StateVec NaturalFieldToImage(const Diffeo& g, const StateVec& x, const StateVec& z_star,
                             double lambda);

// Euclidean-norm potential: f = G^{-1} (-lambda (z - z*) / |z - z*|), zero
// inside the deadzone |z - z*| <= eps_ft.
StateVec FiniteTimeField(const Diffeo& g, const StateVec& x, const StateVec& x_star,
                         const FlowConfig& cfg);

// Plain gradient flow -grad_x V = -lambda G^T (g(x) - g(x*)).
StateVec GradientFlowField(const Diffeo& g, const StateVec& x, const StateVec& x_star,
                           double lambda);

// Samples z(t) = z0 e^{-lambda t} + z* (1 - e^{-lambda t}) and maps each
// sample back through the inverse. Samples are independent.
Trajectory RolloutAnalytic(const Diffeo& g, const StateVec& x0, const StateVec& x_star,
                           const FlowConfig& cfg, const std::vector<double>& times,
                           int threads = 1);

// Classic fixed-step RK4 on [0, T]; the last step is shortened to land on T.
Trajectory IntegrateField(const VectorField& field, const StateVec& x0, double horizon,
                          const FlowConfig& cfg);

// RK4 on x' = f(x, x*(t)); records the tracking error x(t) - x*(t).
Trajectory TrackingRollout(const Diffeo& g, const StateVec& x0, const GoalPath& path,
                           double horizon, const FlowConfig& cfg);

// Shear map g(x) = (x1, h(x1) x1 + x2), h(s) = 2 sin s + cos 5s - 3s.
class ShearMap : public Diffeo {
 public:
  static double H(double s);
  static double HPrime(double s);

  int dim() const override { return 2; }
  StateVec Forward(const StateVec& x) const override;
  Mat Jacobian(const StateVec& x) const override;
  StateVec Inverse(const StateVec& z, double tol = 0.0) const override;
};

struct ShearCompareReport {
  bool gradient_flow_exits = false;
  double natural_flow_max_z_norm = 0.0;
  double gradient_flow_max_z_norm = 0.0;
  // First (start, goal) pair, in sweep order, where the gradient flow leaves
  // the unit ball.
  std::optional<StateVec> exit_start;
  std::optional<StateVec> exit_goal;
  double exit_max_z_norm = 0.0;
  int pairs = 0;
};

// Integrates the natural and gradient-flow fields of the shear map from every
// start to every goal and reports the largest |g(x(t))| reached by each.
ShearCompareReport ShearFlowCompare(const std::vector<StateVec>& goals,
                               const std::vector<StateVec>& starts, double lambda,
                               double horizon, double step);

// Default sweep: goals on rings of radius {0, 0.3, 0.6, 0.9} (8 angles each)
// and starts on the unit circle (16 angles), mapped back to X.
void ShearDefaultSweep(std::vector<StateVec>* goals, std::vector<StateVec>* starts);

nlohmann::json TrajectoryToJson(const Trajectory& traj);
Trajectory TrajectoryFromJson(const nlohmann::json& j);
nlohmann::json GoalPathToJson(const GoalPath& path);
GoalPath GoalPathFromJson(const nlohmann::json& j);

}  // namespace safeflow

#endif  // SAFEFLOW_FLOW_H_
