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

#include "safeflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "safeflow/json_util.hpp"

namespace safeflow {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CertificateReport Finish(CertificateReport r) {
  r.pass = r.worst_margin >= -r.tolerance;
  return r;
}

StateVec UniformIn(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  StateVec x(box.dim());
  for (int i = 0; i < box.dim(); ++i) x[i] = box.min[i] + unit(rng) * (box.max[i] - box.min[i]);
  return x;
}

// Uniform in the shell r_lo < |z| <= r_hi of R^n.
StateVec UniformInShell(int n, double r_lo, double r_hi, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  StateVec d(n);
  do {
    for (int i = 0; i < n; ++i) d[i] = normal(rng);
  } while (d.norm() == 0.0);
  const double lo = std::pow(r_lo, n);
  const double hi = std::pow(r_hi, n);
  double r = std::pow(lo + (hi - lo) * (1.0 - unit(rng)), 1.0 / n);
  return r * d.normalized();
}

// Min over a per-index array, keeping the first index attaining it.
std::pair<double, std::size_t> MinWithIndex(const std::vector<double>& v) {
  double best = kInf;
  std::size_t at = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < best) {
      best = v[i];
      at = i;
    }
  }
  return {best, at};
}

}  // namespace

nlohmann::json ReportToJson(const CertificateReport& r) {
  return {{"name", r.name},         {"worst_margin", r.worst_margin},
          {"tolerance", r.tolerance}, {"samples", r.samples},
          {"seed", r.seed},         {"asserted", r.asserted},
          {"pass", r.pass},         {"details", r.details}};
}

nlohmann::json ReportsToJson(const std::vector<CertificateReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(ReportToJson(r));
  return arr;
}

bool AllAssertedPass(const std::vector<CertificateReport>& reports) {
  return std::all_of(reports.begin(), reports.end(),
                     [](const CertificateReport& r) { return !r.asserted || r.pass; });
}

std::vector<StateVec> SampleLearnedSet(const Diffeo& g, const Box& region, std::size_t count,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<StateVec> out;
  out.reserve(count);
  int misses = 0;
  while (out.size() < count) {
    StateVec x = UniformIn(region, rng);
    if (g.Forward(x).norm() <= 1.0) {
      out.push_back(std::move(x));
      misses = 0;
    } else if (++misses >= kMaxConsecutiveRejections) {
      throw NumericalError("learned set has no mass inside the sampling region");
    }
  }
  return out;
}

CertificateReport CheckBilip(const Diffeo& g, const std::optional<CertBounds>& bounds,
                             const Box& region, long pairs, std::uint64_t seed, int threads) {
  if (pairs < 1) throw InputError("check_bilip needs at least one pair");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double near = 1e-2 * region.diagonal();
  std::vector<StateVec> a(pairs), b(pairs);
  for (long i = 0; i < pairs; ++i) {
    a[i] = UniformIn(region, rng);
    if (i % 2 == 0) {
      b[i] = UniformIn(region, rng);
    } else {
      StateVec d(region.dim());
      for (int k = 0; k < d.size(); ++k) d[k] = normal(rng);
      b[i] = a[i] + near * d;
    }
  }
  std::vector<double> ratio(pairs, 1.0);
  ParallelFor(pairs, threads, [&](std::size_t i) {
    const double dx = (a[i] - b[i]).norm();
    if (dx > 0.0) ratio[i] = (g.Forward(a[i]) - g.Forward(b[i])).norm() / dx;
  });
  const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
  CertificateReport r;
  r.name = "bilipschitz";
  r.tolerance = 1e-9;
  r.samples = pairs;
  r.seed = seed;
  r.details = {{"empirical_mu", *lo}, {"empirical_nu", *hi}};
  if (!bounds) {
    r.asserted = false;
    r.worst_margin = 0.0;
    return Finish(r);
  }
  long violations = 0;
  double worst = kInf;
  for (double q : ratio) {
    const double m = std::min(q / bounds->mu - 1.0, 1.0 - q / bounds->nu);
    worst = std::min(worst, m);
    if (m < -r.tolerance) ++violations;
  }
  r.worst_margin = worst;
  r.details["mu"] = bounds->mu;
  r.details["nu"] = bounds->nu;
  r.details["violations"] = violations;
  return Finish(r);
}

CertificateReport CheckInversion(const BiLipMap& map, long count, std::uint64_t seed,
                                 int threads) {
  if (count < 1) throw InputError("check_inversion needs at least one sample");
  std::mt19937_64 rng(seed);
  std::vector<StateVec> z(count);
  for (auto& zi : z) zi = UniformInShell(map.dim(), 0.0, 1.0, rng);
  const InverseOptions opts = map.inverse_options();
  const double round_trip_tol = 1e-8;
  std::vector<double> err(count, 0.0);
  std::vector<int> iters(count, 0);
  std::vector<double> contraction(count, 0.0);
  std::vector<double> excess(count, -kInf);  // observed contraction - (tau + 0.05)
  ParallelFor(count, threads, [&](std::size_t i) {
    InverseStats stats;
    const StateVec x = map.Inverse(z[i], opts, &stats);
    err[i] = (map.Forward(x) - z[i]).norm();
    const int blocks = static_cast<int>(stats.iterations.size());
    for (int s = 0; s < blocks; ++s) {
      const int k = blocks - 1 - s;  // stats are in solve order
      iters[i] = std::max(iters[i], stats.iterations[s]);
      contraction[i] = std::max(contraction[i], stats.max_contraction[s]);
      excess[i] = std::max(excess[i],
                           stats.max_contraction[s] - (map.res_blocks()[k].tau + 0.05));
    }
  });
  const double max_err = *std::max_element(err.begin(), err.end());
  const int max_iter = *std::max_element(iters.begin(), iters.end());
  const double max_excess = *std::max_element(excess.begin(), excess.end());
  CertificateReport r;
  r.name = "inversion";
  r.tolerance = 0.0;
  r.samples = count;
  r.seed = seed;
  r.worst_margin = std::min({1.0 - max_err / round_trip_tol,
                             static_cast<double>(opts.max_iter - max_iter) / opts.max_iter,
                             -max_excess});
  r.details = {{"max_round_trip_error", max_err},
               {"max_iterations", max_iter},
               {"max_contraction", *std::max_element(contraction.begin(), contraction.end())},
               {"inverse_tol", opts.tol}};
  return Finish(r);
}

CertificateReport CheckBarrierDecay(const Diffeo& g, double lambda,
                                    const std::vector<StateVec>& samples,
                                    const std::vector<StateVec>& goals, std::uint64_t seed,
                                    int threads) {
  const std::size_t total = samples.size() * goals.size();
  std::vector<double> margin(total, kInf);
  std::vector<StateVec> z_star(goals.size());
  for (std::size_t j = 0; j < goals.size(); ++j) z_star[j] = g.Forward(goals[j]);
  ParallelFor(samples.size(), threads, [&](std::size_t i) {
    const StateVec z = g.Forward(samples[i]);
    const Mat jac = g.Jacobian(samples[i]);
    const double h = 1.0 - z.squaredNorm();
    for (std::size_t j = 0; j < goals.size(); ++j) {
      const StateVec f = NaturalFieldToImage(g, samples[i], z_star[j], lambda);
      const double hdot = -2.0 * z.dot(jac * f);
      margin[i * goals.size() + j] = hdot + 2.0 * lambda * h;
    }
  });
  CertificateReport r;
  r.name = "barrier_decay";
  r.tolerance = 1e-9;
  r.samples = static_cast<long>(total);
  r.seed = seed;
  const auto [worst, at] = MinWithIndex(margin);
  r.worst_margin = total > 0 ? worst : 0.0;
  if (total > 0) {
    r.details = {{"worst_sample", at / goals.size()}, {"worst_goal", at % goals.size()}};
  }
  return Finish(r);
}

CertificateReport CheckBarrierExterior(const Diffeo& g, double lambda,
                                       const std::vector<StateVec>& samples,
                                       const std::vector<StateVec>& goals,
                                       std::uint64_t seed, int threads) {
  const std::size_t total = samples.size() * goals.size();
  std::vector<double> hdot_min(total, kInf);
  std::vector<StateVec> z_star(goals.size());
  for (std::size_t j = 0; j < goals.size(); ++j) z_star[j] = g.Forward(goals[j]);
  long skipped = 0;
  std::vector<char> in_shell(samples.size(), 0);
  ParallelFor(samples.size(), threads, [&](std::size_t i) {
    const StateVec z = g.Forward(samples[i]);
    const double n = z.norm();
    if (!(n > 1.0 && n <= 2.0)) return;
    in_shell[i] = 1;
    const Mat jac = g.Jacobian(samples[i]);
    for (std::size_t j = 0; j < goals.size(); ++j) {
      const StateVec f = NaturalFieldToImage(g, samples[i], z_star[j], lambda);
      hdot_min[i * goals.size() + j] = -2.0 * z.dot(jac * f);
    }
  });
  for (char c : in_shell) skipped += c ? 0 : 1;
  CertificateReport r;
  r.name = "barrier_exterior";
  r.tolerance = 0.0;
  r.samples = static_cast<long>((samples.size() - skipped) * goals.size());
  r.seed = seed;
  const auto [worst, at] = MinWithIndex(hdot_min);
  // hdot must be strictly positive; a zero counts as a failure.
  r.worst_margin = r.samples > 0 ? (worst > 0.0 ? worst : -kInf) : 0.0;
  r.details = {{"min_hdot", r.samples > 0 ? worst : 0.0}, {"skipped_outside_shell", skipped}};
  if (r.samples > 0) r.details["worst_sample"] = at / goals.size();
  return Finish(r);
}

CertificateReport CheckConvergence(const std::vector<Trajectory>& trajectories,
                                   const CertBounds& bounds, double lambda) {
  CertificateReport r;
  r.name = "exponential_convergence";
  r.tolerance = 0.0;
  double worst = kInf;
  long samples = 0;
  nlohmann::json where;
  const double kappa = bounds.distortion();
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const Trajectory& tr = trajectories[k];
    if (tr.states.empty()) continue;
    const double d0 = (tr.states.front() - tr.goal).norm();
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
      const double dev = (tr.states[i] - tr.goal).norm();
      const double bound =
          kappa * std::exp(-lambda * tr.times[i]) * d0 * (1.0 + 1e-6) + tr.tol / bounds.mu;
      const double m = bound > 0.0 ? 1.0 - dev / bound : (dev == 0.0 ? 0.0 : -kInf);
      if (m < worst) {
        worst = m;
        where = {{"trajectory", k}, {"sample", i}, {"deviation", dev}, {"bound", bound}};
      }
      ++samples;
    }
  }
  r.samples = samples;
  r.worst_margin = samples > 0 ? worst : 0.0;
  r.details = {{"distortion", kappa}, {"worst", where}};
  return Finish(r);
}

CertificateReport CheckVelocity(const Diffeo& g, const CertBounds& bounds, double lambda,
                                const std::vector<StateVec>& samples,
                                const std::vector<StateVec>& goals, int threads) {
  std::vector<StateVec> z_star(goals.size());
  for (std::size_t j = 0; j < goals.size(); ++j) z_star[j] = g.Forward(goals[j]);
  std::vector<double> speed(samples.size(), 0.0);
  ParallelFor(samples.size(), threads, [&](std::size_t i) {
    for (const auto& zs : z_star) {
      speed[i] = std::max(speed[i], NaturalFieldToImage(g, samples[i], zs, lambda).norm());
    }
  });
  const double bound = 2.0 * lambda / bounds.mu;
  const double max_speed = speed.empty() ? 0.0 : *std::max_element(speed.begin(), speed.end());
  CertificateReport r;
  r.name = "velocity_bound";
  r.tolerance = 1e-9;
  r.samples = static_cast<long>(samples.size() * goals.size());
  r.worst_margin = 1.0 - max_speed / bound;
  r.details = {{"max_speed", max_speed}, {"bound", bound}};
  return Finish(r);
}

CertificateReport CheckFiniteTimeBand(const Diffeo& g, const CertBounds& bounds,
                                      const FlowConfig& cfg,
                                      const std::vector<StateVec>& samples,
                                      const std::vector<StateVec>& goals, int threads) {
  const double lo = cfg.lambda / bounds.nu;
  const double hi = cfg.lambda / bounds.mu;
  std::vector<double> margin(samples.size(), kInf);
  std::vector<double> smin(samples.size(), kInf), smax(samples.size(), 0.0);
  std::vector<long> counted(samples.size(), 0);
  std::vector<StateVec> z_star(goals.size());
  for (std::size_t j = 0; j < goals.size(); ++j) z_star[j] = g.Forward(goals[j]);
  ParallelFor(samples.size(), threads, [&](std::size_t i) {
    const StateVec z = g.Forward(samples[i]);
    for (std::size_t j = 0; j < goals.size(); ++j) {
      if ((z - z_star[j]).norm() <= cfg.eps_ft) continue;
      const double s = FiniteTimeField(g, samples[i], goals[j], cfg).norm();
      margin[i] = std::min({margin[i], s / lo - 1.0, 1.0 - s / hi});
      smin[i] = std::min(smin[i], s);
      smax[i] = std::max(smax[i], s);
      ++counted[i];
    }
  });
  CertificateReport r;
  r.name = "finite_time_band";
  r.tolerance = 1e-9;
  for (long c : counted) r.samples += c;
  const double worst = margin.empty() ? kInf : *std::min_element(margin.begin(), margin.end());
  r.worst_margin = r.samples > 0 ? worst : 0.0;
  r.details = {{"lower", lo},
               {"upper", hi},
               {"min_speed", smin.empty() ? 0.0 : *std::min_element(smin.begin(), smin.end())},
               {"max_speed", smax.empty() ? 0.0 : *std::max_element(smax.begin(), smax.end())}};
  return Finish(r);
}

CertificateReport CheckLearnedSafety(const Diffeo& g, const std::vector<Trajectory>& trajectories,
                                     double tol) {
  CertificateReport r;
  r.name = "learned_set_safety";
  r.tolerance = 0.0;
  double max_norm = 0.0;
  long violations = 0;
  for (const auto& tr : trajectories) {
    for (const auto& x : tr.states) {
      const double n = g.Forward(x).norm();
      max_norm = std::max(max_norm, n);
      if (n > 1.0 + tol) ++violations;
      ++r.samples;
    }
  }
  r.worst_margin = (1.0 + tol) - max_norm;
  r.details = {{"max_z_norm", max_norm}, {"violations", violations}, {"tol", tol}};
  return Finish(r);
}

CertificateReport CheckTracking(const Trajectory& trajectory, const CertBounds& bounds,
                                double lambda, double b) {
  if (trajectory.tracking_error.size() != trajectory.states.size() ||
      trajectory.states.empty()) {
    throw InputError("tracking check needs a goal-path trajectory");
  }
  CertificateReport r;
  r.name = "tracking_bound";
  r.tolerance = 0.0;
  const double kappa = bounds.distortion();
  const double e0 = trajectory.tracking_error.front().norm();
  double worst = kInf;
  double max_err = 0.0;
  for (std::size_t i = 0; i < trajectory.states.size(); ++i) {
    const double e = trajectory.tracking_error[i].norm();
    const double bound =
        kappa * (e0 * std::exp(-lambda * trajectory.times[i]) + b / lambda) * 1.02;
    max_err = std::max(max_err, e);
    worst = std::min(worst, bound > 0.0 ? 1.0 - e / bound : (e == 0.0 ? 0.0 : -kInf));
    ++r.samples;
  }
  r.worst_margin = worst;
  r.details = {{"speed_bound", b}, {"max_error", max_err}, {"distortion", kappa}};
  return Finish(r);
}

CertificateReport CheckSafetyEnv(const Environment& env,
                                 const std::vector<Trajectory>& trajectories,
                                 double min_rate) {
  CertificateReport r;
  r.name = "true_environment_safety";
  r.asserted = false;
  r.tolerance = 0.0;
  long safe_traj = 0;
  long safe_samples = 0;
  nlohmann::json first = nullptr;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    bool ok = true;
    const auto& states = trajectories[k].states;
    for (std::size_t i = 0; i < states.size(); ++i) {
      ++r.samples;
      if (env.IsSafe(states[i])) {
        ++safe_samples;
      } else {
        if (first.is_null()) first = {{"trajectory", k}, {"sample", i}};
        ok = false;
      }
    }
    if (ok) ++safe_traj;
  }
  const double rate =
      trajectories.empty() ? 1.0 : static_cast<double>(safe_traj) / trajectories.size();
  r.worst_margin = rate - min_rate;
  r.details = {{"trajectory_safe_rate", rate},
               {"sample_safe_rate",
                r.samples > 0 ? static_cast<double>(safe_samples) / r.samples : 1.0},
               {"min_rate", min_rate},
               {"first_violation", first}};
  return Finish(r);
}

CertificateReport CheckShearCounterexample(const ShearCompareReport& report) {
  CertificateReport r;
  r.name = "shear_counterexample";
  r.tolerance = 0.0;
  r.samples = report.pairs;
  // Both parts must hold: the natural flow stays inside, the gradient flow
  // leaves for at least one pair.
  const double natural = (1.0 + 1e-6) - report.natural_flow_max_z_norm;
  const double exits = report.exit_start ? report.exit_max_z_norm - 1.0 : -kInf;
  r.worst_margin = std::min(natural, exits > 0.0 ? exits : -kInf);
  r.details = {{"natural_max_z_norm", report.natural_flow_max_z_norm},
               {"gradient_max_z_norm", report.gradient_flow_max_z_norm},
               {"pairs", report.pairs}};
  if (report.exit_start) {
    r.details["exit_start"] = VecToStd(*report.exit_start);
    r.details["exit_goal"] = VecToStd(*report.exit_goal);
    r.details["exit_max_z_norm"] = report.exit_max_z_norm;
  }
  return Finish(r);
}

std::vector<CertificateReport> RunSuite(const PlannerModel& model, const Environment& env,
                                        const SuiteOptions& options) {
  const BiLipMap& g = model.map;
  const CertBounds bounds = g.CertifiedBounds();
  const double lambda = model.lambda;
  const Box region = env.SamplingBox();
  // Independent RNG stream per check.
  const std::vector<std::uint64_t> seeds = DeriveSeeds(options.seed, 8);
  std::vector<CertificateReport> out;
  out.push_back(CheckBilip(g, bounds, region, options.bilip_pairs, seeds[0], options.threads));
  out.push_back(CheckInversion(g, options.inversion_count, seeds[1], options.threads));

  const std::vector<StateVec> goals = SampleLearnedSet(g, region, options.goals, seeds[2]);
  const std::vector<StateVec> inside =
      SampleLearnedSet(g, region, options.barrier_samples, seeds[3]);
  out.push_back(CheckBarrierDecay(g, lambda, inside, goals, seeds[3], options.threads));
  {
    std::mt19937_64 rng(seeds[4]);
    std::vector<StateVec> shell(options.exterior_samples);
    for (auto& x : shell) x = g.Inverse(UniformInShell(g.dim(), 1.0, 2.0, rng),
                                        g.inverse_options());
    out.push_back(CheckBarrierExterior(g, lambda, shell, goals, seeds[4], options.threads));
  }

  // Rollouts between random learned-set points.
  FlowConfig cfg;
  cfg.lambda = lambda;
  cfg.inv_tol = g.inverse_options().tol;
  const double horizon = options.horizon > 0.0 ? options.horizon : 6.0 / lambda;
  std::vector<double> times(options.rollout_samples);
  for (int i = 0; i < options.rollout_samples; ++i) {
    times[i] = options.rollout_samples > 1 ? horizon * i / (options.rollout_samples - 1) : 0.0;
  }
  const std::vector<StateVec> ends = SampleLearnedSet(g, region, 2 * options.rollouts, seeds[5]);
  std::vector<Trajectory> rollouts;
  for (int k = 0; k < options.rollouts; ++k) {
    rollouts.push_back(RolloutAnalytic(g, ends[2 * k], ends[2 * k + 1], cfg, times,
                                       options.threads));
  }
  CertificateReport learned = CheckLearnedSafety(g, rollouts);
  learned.seed = seeds[5];
  out.push_back(learned);
  CertificateReport conv = CheckConvergence(rollouts, bounds, lambda);
  conv.seed = seeds[5];
  out.push_back(conv);
  CertificateReport env_safety = CheckSafetyEnv(env, rollouts, options.env_min_rate);
  env_safety.seed = seeds[5];
  out.push_back(env_safety);

  // Velocity bounds over a grid restricted to the learned set.
  std::vector<StateVec> grid;
  for (int i = 0; i < options.grid; ++i) {
    for (int j = 0; j < options.grid; ++j) {
      StateVec x(2);
      x << region.min[0] + (region.max[0] - region.min[0]) * (i + 0.5) / options.grid,
          region.min[1] + (region.max[1] - region.min[1]) * (j + 0.5) / options.grid;
      if (g.Forward(x).norm() <= 1.0) grid.push_back(x);
    }
  }
  CertificateReport vel = CheckVelocity(g, bounds, lambda, grid, goals, options.threads);
  vel.seed = seeds[2];
  out.push_back(vel);
  CertificateReport band = CheckFiniteTimeBand(g, bounds, cfg, grid, goals, options.threads);
  band.seed = seeds[2];
  out.push_back(band);

  // Circular goal path: a circle of radius 0.5 in Z pulled back to X, timed
  // so the piecewise-linear path moves at the requested speed.
  {
    const int waypoints = 64;
    std::vector<StateVec> pts;
    for (int i = 0; i <= waypoints; ++i) {
      const double a = 2.0 * std::numbers::pi * i / waypoints;
      StateVec z(2);
      z << 0.5 * std::cos(a), 0.5 * std::sin(a);
      pts.push_back(g.Inverse(z, g.inverse_options()));
    }
    std::vector<double> ptimes{0.0};
    for (int i = 1; i <= waypoints; ++i) {
      ptimes.push_back(ptimes.back() + (pts[i] - pts[i - 1]).norm() / options.tracking_speed);
    }
    GoalPath path(ptimes, pts);
    FlowConfig tcfg = cfg;
    tcfg.step = 1e-3 / lambda;
    const StateVec x0 = SampleLearnedSet(g, region, 1, seeds[6]).front();
    const Trajectory tr = TrackingRollout(g, x0, path, ptimes.back(), tcfg);
    CertificateReport track = CheckTracking(tr, bounds, lambda, path.MaxSpeed());
    track.seed = seeds[6];
    out.push_back(track);
    CertificateReport tsafe = CheckLearnedSafety(g, {tr});
    tsafe.name = "tracking_learned_set_safety";
    tsafe.seed = seeds[6];
    out.push_back(tsafe);
  }

  if (options.shear_check) {
    std::vector<StateVec> eg, es;
    ShearDefaultSweep(&eg, &es);
    out.push_back(CheckShearCounterexample(ShearFlowCompare(eg, es, 1.0, 8.0, 5e-3)));
  }
  return out;
}

}  // namespace safeflow
