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

#include "safeflow/train.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace safeflow {
namespace {

struct BatchItem {
  const LabeledPoint* point;
  bool safe;
  double weight;  // share of this sample in the full loss (1/M or 1/N)
};

// Weighted hinge losses of the items and the gradient of
// scale * sum(weight * hinge^2) with respect to the parameters.
StateVec HingeGradient(const BiLipMap& map, const std::vector<BatchItem>& items,
                       double lambda, double scale, LossParts* parts) {
  const int n = map.dim();
  const Eigen::Index count = static_cast<Eigen::Index>(items.size());
  Mat x(n, count);
  for (Eigen::Index i = 0; i < count; ++i) x.col(i) = items[i].point->x;
  BiLipMap::Tape tape;
  const Mat z = map.ForwardBatch(x, &tape);
  const double r2 = map.ball_scale() * map.ball_scale();
  Mat z_bar(n, count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const BatchItem& it = items[i];
    const double v = 0.5 * lambda * r2 * z.col(i).squaredNorm();
    const double gap = it.safe ? std::max(v - it.point->c, 0.0)
                               : std::max(it.point->c - v, 0.0);
    const double loss = it.weight * gap * gap;
    if (it.safe) {
      parts->safe += loss;
    } else {
      parts->unsafe += loss;
    }
    const double dv = (it.safe ? 2.0 : -2.0) * it.weight * gap * scale;
    z_bar.col(i) = (dv * lambda * r2) * z.col(i);
  }
  StateVec raw_bar;
  StateVec grad = map.BackwardBatch(tape, z_bar, nullptr, nullptr, &raw_bar);
  if (map.goal() && count > 0) {
    // The shift is raw(goal), so it receives minus the summed raw cotangent.
    grad -= map.RawParamGradient(*map.goal(), raw_bar);
  }
  return grad;
}

std::vector<BatchItem> AllItems(const LabeledDatasets& data) {
  std::vector<BatchItem> items;
  const double ws = data.safe.empty() ? 0.0 : 1.0 / data.safe.size();
  const double wu = data.unsafe.empty() ? 0.0 : 1.0 / data.unsafe.size();
  for (const auto& p : data.safe) items.push_back({&p, true, ws});
  for (const auto& p : data.unsafe) items.push_back({&p, false, wu});
  return items;
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be > 0");
  if (!(rho >= 0.0)) throw InputError("rho must be >= 0");
  if (!(lambda > 0.0)) throw InputError("lambda must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InputError("Adam betas must lie in [0, 1)");
  }
}

double LyapunovValue(const BiLipMap& map, const StateVec& x, double lambda) {
  const double r = map.ball_scale();
  return 0.5 * lambda * r * r * map.Forward(x).squaredNorm();
}

LossParts SeparationLoss(const BiLipMap& map, const LabeledDatasets& data, double lambda) {
  LossParts parts;
  const double ws = data.safe.empty() ? 0.0 : 1.0 / data.safe.size();
  const double wu = data.unsafe.empty() ? 0.0 : 1.0 / data.unsafe.size();
  for (const auto& p : data.safe) {
    const double gap = std::max(LyapunovValue(map, p.x, lambda) - p.c, 0.0);
    parts.safe += ws * gap * gap;
  }
  for (const auto& p : data.unsafe) {
    const double gap = std::max(p.c - LyapunovValue(map, p.x, lambda), 0.0);
    parts.unsafe += wu * gap * gap;
  }
  parts.total = parts.safe + parts.unsafe;
  return parts;
}

StateVec SeparationLossGradient(const BiLipMap& map, const LabeledDatasets& data,
                                double lambda, LossParts* parts) {
  LossParts local;
  const StateVec grad = HingeGradient(map, AllItems(data), lambda, 1.0, &local);
  local.total = local.safe + local.unsafe;
  if (parts) *parts = local;
  return grad;
}

double DemoLoss(const BiLipMap& map, const std::vector<DemoTriple>& demo, double lambda) {
  if (demo.empty()) throw InputError("demo loss needs at least one triple");
  double sum = 0.0;
  for (const auto& d : demo) {
    const StateVec f = map.Jacobian(d.x).partialPivLu().solve(
        lambda * (map.Forward(d.x_star) - map.Forward(d.x)));
    sum += (d.xdot - f).squaredNorm();
  }
  return sum / demo.size();
}

StateVec DemoLossGradient(const BiLipMap& map, const std::vector<DemoTriple>& demo,
                          double lambda, double* loss) {
  if (demo.empty()) throw InputError("demo loss needs at least one triple");
  StateVec grad = StateVec::Zero(map.ParamCount());
  double sum = 0.0;
  const double w = 1.0 / demo.size();
  for (const auto& d : demo) {
    const Mat jac = map.Jacobian(d.x);
    const auto lu = jac.partialPivLu();
    const StateVec z_star = map.Forward(d.x_star);
    const StateVec z = map.Forward(d.x);
    const StateVec f = lu.solve(lambda * (z_star - z));
    const StateVec err = f - d.xdot;
    sum += err.squaredNorm();
    // f = G^{-1} w with w = lambda (z* - z):
    //   dL = a^T dw - a^T dG f,  a = G^{-T} dL/df.
    const StateVec a = jac.transpose().partialPivLu().solve(2.0 * w * err);
    BiLipMap::Tape tape;
    const Mat tangent = f;
    map.ForwardBatch(d.x, &tape, &tangent);
    const Mat zbar = -lambda * a;
    const Mat tbar = -a;
    StateVec raw_bar;
    grad += map.BackwardBatch(tape, zbar, &tbar, nullptr, &raw_bar);
    BiLipMap::Tape star_tape;
    map.ForwardBatch(d.x_star, &star_tape);
    StateVec star_raw_bar;
    grad += map.BackwardBatch(star_tape, lambda * a, nullptr, nullptr, &star_raw_bar);
    if (map.goal()) grad -= map.RawParamGradient(*map.goal(), raw_bar + star_raw_bar);
  }
  if (loss) *loss = sum * w;
  return grad;
}

Adam::Adam(Eigen::Index size, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(StateVec::Zero(size)),
      v_(StateVec::Zero(size)) {}

void Adam::Step(StateVec& theta, const StateVec& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void FitInputNormalization(BiLipMap& map, const LabeledDatasets& data, double in_extent) {
  if (data.safe.empty()) throw InputError("no safe samples");
  StateVec lo = data.safe.front().x;
  StateVec hi = lo;
  for (const auto& p : data.safe) {
    lo = lo.cwiseMin(p.x);
    hi = hi.cwiseMax(p.x);
  }
  const double half_diag = 0.5 * (hi - lo).norm();
  map.SetInputNormalization(0.5 * (lo + hi), half_diag > 0.0 ? in_extent / half_diag : 1.0);
}

double AutoOutScale(const BiLipMap& map, const LabeledDatasets& data, double lambda) {
  const StateVec anchor = map.RawOutput(map.goal() ? *map.goal() : data.goal);
  double reach = 0.0;
  for (const auto& p : data.safe) {
    reach = std::max(reach, (map.RawOutput(p.x) - anchor).norm());
  }
  if (reach == 0.0) {
    reach = std::numeric_limits<double>::infinity();
    for (const auto& p : data.unsafe) {
      reach = std::min(reach, (map.RawOutput(p.x) - anchor).norm());
    }
    if (!std::isfinite(reach) || reach == 0.0) return map.out_scale();
  }
  const double target = std::sqrt(2.0 * (data.c_bar + 0.5 * data.delta) / lambda);
  return map.out_scale() * target / reach;
}

std::pair<BiLipMap, TrainReport> Train(BiLipMap map, const LabeledDatasets& data,
                                       const TrainConfig& config) {
  config.Validate();
  if (data.safe.empty()) throw InputError("training needs safe samples");
  if (data.unsafe.empty()) {
    std::cerr << "warning: no unsafe samples; the unsafe loss term is inactive\n";
  }
  const auto start = std::chrono::steady_clock::now();
  if (!map.goal()) map.SetGoalCenter(data.goal);
  if (config.auto_out_scale) map.SetOutScale(AutoOutScale(map, data, config.lambda));
  // The radial profile bends around the target level radius.
  map.SetRadialScale(std::sqrt(2.0 * (data.c_bar + 0.5 * data.delta) / config.lambda));

  const bool use_demo = config.rho > 0.0 && !data.demo.empty();
  StateVec theta = map.Params();
  Adam adam(theta.size(), config.learning_rate, config.beta1, config.beta2,
            config.adam_eps);
  std::mt19937_64 rng(config.seed);
  std::vector<BatchItem> items = AllItems(data);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> demo_order(data.demo.size());
  std::iota(demo_order.begin(), demo_order.end(), 0);
  std::size_t demo_at = demo_order.size();

  TrainReport report;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<BatchItem> chunk;
  std::vector<DemoTriple> demo_chunk;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossParts epoch_parts;
    double task_sum = 0.0;
    int task_batches = 0;
    for (std::size_t at = 0, b = 0; at < order.size(); at += batch, ++b) {
      chunk.clear();
      const std::size_t end = std::min(order.size(), at + batch);
      for (std::size_t i = at; i < end; ++i) chunk.push_back(items[order[i]]);
      // Scaled so the minibatch gradient is unbiased for the full loss.
      const double scale = static_cast<double>(items.size()) / chunk.size();
      LossParts parts;
      StateVec grad = HingeGradient(map, chunk, config.lambda, scale, &parts);
      epoch_parts.safe += parts.safe;
      epoch_parts.unsafe += parts.unsafe;
      if (use_demo) {
        demo_chunk.clear();
        while (demo_chunk.size() < std::min(batch, demo_order.size())) {
          if (demo_at >= demo_order.size()) {
            std::shuffle(demo_order.begin(), demo_order.end(), rng);
            demo_at = 0;
          }
          demo_chunk.push_back(data.demo[demo_order[demo_at++]]);
        }
        double task = 0.0;
        grad += config.rho * DemoLossGradient(map, demo_chunk, config.lambda, &task);
        task_sum += task;
        ++task_batches;
      }
      const double batch_loss = parts.safe + parts.unsafe;
      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b));
      }
      adam.Step(theta, grad);
      map.SetParams(theta);
    }
    epoch_parts.task = task_batches > 0 ? task_sum / task_batches : 0.0;
    epoch_parts.total = epoch_parts.safe + epoch_parts.unsafe + config.rho * epoch_parts.task;
    report.total.push_back(epoch_parts.total);
    report.safe.push_back(epoch_parts.safe);
    report.unsafe.push_back(epoch_parts.unsafe);
    report.task.push_back(epoch_parts.task);
    if (config.on_epoch) config.on_epoch(epoch, epoch_parts.total);
  }
  SummarizeSeparation(map, data, config.lambda, &report);
  report.ball_scale = map.ball_scale();
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(map), std::move(report)};
}

void SummarizeSeparation(const BiLipMap& map, const LabeledDatasets& data, double lambda,
                         TrainReport* report) {
  report->max_safe_violation = -std::numeric_limits<double>::infinity();
  std::size_t ok = 0;
  for (const auto& p : data.safe) {
    const double excess = LyapunovValue(map, p.x, lambda) - p.c;
    report->max_safe_violation = std::max(report->max_safe_violation, excess);
    if (excess <= 0.0) ++ok;
  }
  report->safe_fraction = data.safe.empty() ? 1.0 : static_cast<double>(ok) / data.safe.size();
  report->min_unsafe_margin = std::numeric_limits<double>::infinity();
  ok = 0;
  for (const auto& p : data.unsafe) {
    const double margin = LyapunovValue(map, p.x, lambda) - data.c_bar;
    report->min_unsafe_margin = std::min(report->min_unsafe_margin, margin);
    if (margin >= 0.0) ++ok;
  }
  report->unsafe_fraction =
      data.unsafe.empty() ? 1.0 : static_cast<double>(ok) / data.unsafe.size();
}

Calibration CalibrateLevel(BiLipMap& map, const LabeledDatasets& data, double lambda) {
  if (!(lambda > 0.0)) throw InputError("lambda must be > 0");
  if (!(data.delta > 0.0)) throw InputError("delta must be > 0");
  Calibration cal;
  cal.level_c = data.c_bar + 0.5 * data.delta;
  cal.ball_scale = std::sqrt(2.0 * cal.level_c / lambda);
  cal.max_safe_excess = -std::numeric_limits<double>::infinity();
  for (const auto& p : data.safe) {
    cal.max_safe_excess =
        std::max(cal.max_safe_excess, LyapunovValue(map, p.x, lambda) - cal.level_c);
  }
  cal.min_unsafe_margin = std::numeric_limits<double>::infinity();
  for (const auto& p : data.unsafe) {
    cal.min_unsafe_margin =
        std::min(cal.min_unsafe_margin, LyapunovValue(map, p.x, lambda) - cal.level_c);
  }
  cal.separated = cal.max_safe_excess <= 0.0 && cal.min_unsafe_margin > 0.0;
  if (!cal.separated) {
    std::cerr << "warning: level " << cal.level_c
              << " does not strictly separate the data; safety holds for the "
                 "learned set only\n";
  }
  map.SetBallScale(cal.ball_scale);
  return cal;
}

}  // namespace safeflow
