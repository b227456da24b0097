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

#include "safeflow/flow.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "safeflow/json_util.hpp"

namespace safeflow {

void FlowConfig::Validate() const {
  if (!(lambda > 0.0)) throw InputError("lambda must be > 0");
  if (!(inv_tol > 0.0)) throw InputError("inversion tol must be > 0");
  if (!(eps_ft >= 0.0)) throw InputError("deadzone must be >= 0");
}

GoalPath::GoalPath(std::vector<double> times, std::vector<StateVec> points)
    : times_(std::move(times)), points_(std::move(points)) {
  if (times_.empty() || times_.size() != points_.size()) {
    throw InputError("goal path needs matching nonempty times and points");
  }
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) {
      throw InputError("goal path times must be strictly increasing");
    }
  }
  for (const auto& p : points_) {
    if (!p.allFinite() || p.size() != points_[0].size()) {
      throw InputError("goal path points must be finite with equal dimension");
    }
  }
}

StateVec GoalPath::At(double t) const {
  if (t <= times_.front()) return points_.front();
  if (t >= times_.back()) return points_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times_.begin());
  const double w = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
  return (1.0 - w) * points_[i - 1] + w * points_[i];
}

double GoalPath::MaxSpeed() const {
  double speed = 0.0;
  for (std::size_t i = 1; i < times_.size(); ++i) {
    speed = std::max(speed, (points_[i] - points_[i - 1]).norm() /
                                (times_[i] - times_[i - 1]));
  }
  return speed;
}

namespace {

StateVec SolveJacobian(const Diffeo& g, const Mat& jac, const StateVec& rhs) {
  if (const auto bounds = g.Bounds()) {
    const Eigen::JacobiSVD<Mat> svd(jac);
    const auto& sv = svd.singularValues();
    const double cond = sv[0] / sv[sv.size() - 1];
    if (!(cond <= 10.0 * bounds->distortion())) {
      throw NumericalError("Jacobian condition number " + std::to_string(cond) +
                           " exceeds 10x the certified distortion");
    }
  }
  return jac.partialPivLu().solve(rhs);
}

}  // namespace

StateVec NaturalFieldToImage(const Diffeo& g, const StateVec& x, const StateVec& z_star,
                             double lambda) {
  const StateVec z = g.Forward(x);
  return SolveJacobian(g, g.Jacobian(x), lambda * (z_star - z));
}

StateVec NaturalField(const Diffeo& g, const StateVec& x, const StateVec& x_star,
                      double lambda) {
  return NaturalFieldToImage(g, x, g.Forward(x_star), lambda);
}

StateVec FiniteTimeField(const Diffeo& g, const StateVec& x, const StateVec& x_star,
                         const FlowConfig& cfg) {
  const StateVec dz = g.Forward(x) - g.Forward(x_star);
  const double dist = dz.norm();
  if (dist <= cfg.eps_ft) return StateVec::Zero(x.size());
  return SolveJacobian(g, g.Jacobian(x), (-cfg.lambda / dist) * dz);
}

StateVec GradientFlowField(const Diffeo& g, const StateVec& x, const StateVec& x_star,
                           double lambda) {
  return -lambda * g.Jacobian(x).transpose() * (g.Forward(x) - g.Forward(x_star));
}

Trajectory RolloutAnalytic(const Diffeo& g, const StateVec& x0, const StateVec& x_star,
                           const FlowConfig& cfg, const std::vector<double>& times,
                           int threads) {
  cfg.Validate();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || (i > 0 && !(times[i] > times[i - 1]))) {
      throw InputError("rollout times must be increasing and nonnegative");
    }
  }
  const StateVec z0 = g.Forward(x0);
  const StateVec z_star = g.Forward(x_star);
  Trajectory traj;
  traj.times = times;
  traj.states.resize(times.size());
  traj.goal = x_star;
  traj.lambda = cfg.lambda;
  traj.tol = cfg.inv_tol;
  traj.method = "analytic";
  ParallelFor(times.size(), threads, [&](std::size_t i) {
    const double decay = std::exp(-cfg.lambda * times[i]);
    const StateVec z = decay * z0 + (1.0 - decay) * z_star;
    try {
      traj.states[i] = g.Inverse(z, cfg.inv_tol);
    } catch (const NonConvergence& e) {
      throw NonConvergence(e.block(), e.residual(),
                           std::string(e.what()) + " at sample " + std::to_string(i));
    }
  });
  return traj;
}

Trajectory IntegrateField(const VectorField& field, const StateVec& x0, double horizon,
                          const FlowConfig& cfg) {
  if (!(horizon > 0.0)) throw InputError("integration horizon must be > 0");
  const double h = cfg.rk4_step();
  Trajectory traj;
  traj.lambda = cfg.lambda;
  traj.method = "rk4";
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  StateVec x = x0;
  double t = 0.0;
  const long steps = static_cast<long>(std::ceil(horizon / h - 1e-9));
  for (long s = 0; s < steps; ++s) {
    const double dt = std::min(h, horizon - t);
    if (dt <= 0.0) break;
    const StateVec k1 = field(t, x);
    const StateVec k2 = field(t + 0.5 * dt, x + 0.5 * dt * k1);
    const StateVec k3 = field(t + 0.5 * dt, x + 0.5 * dt * k2);
    const StateVec k4 = field(t + dt, x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = (s + 1 == steps) ? horizon : t + dt;
    if (!x.allFinite()) {
      throw NumericalError("non-finite state at t = " + std::to_string(t) + " (step " +
                           std::to_string(s + 1) + ")");
    }
    traj.times.push_back(t);
    traj.states.push_back(x);
  }
  return traj;
}

Trajectory TrackingRollout(const Diffeo& g, const StateVec& x0, const GoalPath& path,
                           double horizon, const FlowConfig& cfg) {
  cfg.Validate();
  const VectorField field = [&](double t, const StateVec& x) {
    return NaturalField(g, x, path.At(t), cfg.lambda);
  };
  Trajectory traj = IntegrateField(field, x0, horizon, cfg);
  traj.goal = path.At(horizon);
  traj.goal_path = path;
  traj.method = "tracking-rk4";
  traj.tracking_error.reserve(traj.states.size());
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    traj.tracking_error.push_back(traj.states[i] - path.At(traj.times[i]));
  }
  return traj;
}

double ShearMap::H(double s) { return 2.0 * std::sin(s) + std::cos(5.0 * s) - 3.0 * s; }

double ShearMap::HPrime(double s) {
  return 2.0 * std::cos(s) - 5.0 * std::sin(5.0 * s) - 3.0;
}

StateVec ShearMap::Forward(const StateVec& x) const {
  StateVec z(2);
  z << x[0], H(x[0]) * x[0] + x[1];
  return z;
}

Mat ShearMap::Jacobian(const StateVec& x) const {
  Mat j(2, 2);
  j << 1.0, 0.0, HPrime(x[0]) * x[0] + H(x[0]), 1.0;
  return j;
}

StateVec ShearMap::Inverse(const StateVec& z, double) const {
  StateVec x(2);
  x << z[0], z[1] - H(z[0]) * z[0];
  return x;
}

ShearCompareReport ShearFlowCompare(const std::vector<StateVec>& goals,
                               const std::vector<StateVec>& starts, double lambda,
                               double horizon, double step) {
  const ShearMap shear;
  FlowConfig cfg;
  cfg.lambda = lambda;
  cfg.step = step;
  ShearCompareReport report;
  for (const StateVec& goal : goals) {
    if (shear.Forward(goal).norm() > 1.0 + 1e-12) {
      throw InputError("example goal must lie inside the shear preimage of the ball");
    }
    const StateVec z_star = shear.Forward(goal);
    const VectorField natural = [&](double, const StateVec& x) {
      return NaturalFieldToImage(shear, x, z_star, lambda);
    };
    const VectorField gradient = [&](double, const StateVec& x) {
      return (-lambda * shear.Jacobian(x).transpose() * (shear.Forward(x) - z_star)).eval();
    };
    for (const StateVec& start : starts) {
      ++report.pairs;
      double nat_max = 0.0;
      for (const auto& x : IntegrateField(natural, start, horizon, cfg).states) {
        nat_max = std::max(nat_max, shear.Forward(x).norm());
      }
      double grad_max = 0.0;
      for (const auto& x : IntegrateField(gradient, start, horizon, cfg).states) {
        grad_max = std::max(grad_max, shear.Forward(x).norm());
      }
      report.natural_flow_max_z_norm = std::max(report.natural_flow_max_z_norm, nat_max);
      report.gradient_flow_max_z_norm = std::max(report.gradient_flow_max_z_norm, grad_max);
      if (grad_max > 1.0 && !report.gradient_flow_exits) {
        report.gradient_flow_exits = true;
        report.exit_start = start;
        report.exit_goal = goal;
        report.exit_max_z_norm = grad_max;
      }
    }
  }
  return report;
}

void ShearDefaultSweep(std::vector<StateVec>* goals, std::vector<StateVec>* starts) {
  const ShearMap shear;
  goals->clear();
  starts->clear();
  StateVec z(2);
  for (double radius : {0.0, 0.3, 0.6, 0.9}) {
    const int angles = radius == 0.0 ? 1 : 8;
    for (int a = 0; a < angles; ++a) {
      const double th = 2.0 * std::numbers::pi * a / angles;
      z << radius * std::cos(th), radius * std::sin(th);
      goals->push_back(shear.Inverse(z));
    }
  }
  for (int a = 0; a < 16; ++a) {
    const double th = 2.0 * std::numbers::pi * a / 16;
    z << std::cos(th), std::sin(th);
    starts->push_back(shear.Inverse(z));
  }
}

nlohmann::json GoalPathToJson(const GoalPath& path) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : path.points()) pts.push_back(VecToStd(p));
  return {{"times", path.times()}, {"points", pts}};
}

GoalPath GoalPathFromJson(const nlohmann::json& j) {
  try {
    std::vector<StateVec> pts;
    for (const auto& p : j.at("points")) pts.push_back(VecFromJson(p));
    return GoalPath(j.at("times").get<std::vector<double>>(), std::move(pts));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed goal path: ") + e.what());
  }
}

nlohmann::json TrajectoryToJson(const Trajectory& traj) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : traj.states) states.push_back(VecToStd(s));
  nlohmann::json j = {{"version", kFileFormatVersion},
                      {"times", traj.times},
                      {"states", states},
                      {"goal", VecToStd(traj.goal)},
                      {"lambda", traj.lambda},
                      {"tol", traj.tol},
                      {"method", traj.method}};
  if (traj.goal_path) j["goal_path"] = GoalPathToJson(*traj.goal_path);
  if (!traj.tracking_error.empty()) {
    nlohmann::json err = nlohmann::json::array();
    for (const auto& e : traj.tracking_error) err.push_back(VecToStd(e));
    j["tracking_error"] = err;
  }
  return j;
}

Trajectory TrajectoryFromJson(const nlohmann::json& j) {
  try {
    Trajectory traj;
    traj.times = j.at("times").get<std::vector<double>>();
    for (const auto& s : j.at("states")) traj.states.push_back(VecFromJson(s));
    traj.goal = VecFromJson(j.at("goal"));
    traj.lambda = j.value("lambda", 1.0);
    traj.tol = j.value("tol", 0.0);
    traj.method = j.value("method", std::string());
    if (j.contains("goal_path")) traj.goal_path = GoalPathFromJson(j.at("goal_path"));
    if (j.contains("tracking_error")) {
      for (const auto& e : j.at("tracking_error")) {
        traj.tracking_error.push_back(VecFromJson(e));
      }
    }
    if (traj.times.size() != traj.states.size()) {
      throw InputError("trajectory times and states differ in length");
    }
    return traj;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed trajectory: ") + e.what());
  }
}

}  // namespace safeflow
