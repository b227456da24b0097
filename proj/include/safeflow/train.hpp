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

#ifndef SAFEFLOW_TRAIN_H_
#define SAFEFLOW_TRAIN_H_

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "safeflow/bilip.hpp"
#include "safeflow/roadmap.hpp"

namespace safeflow {

struct TrainConfig {
  int epochs = 1500;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double rho = 0.0;      // weight of the demonstration term
  double lambda = 1.0;
  std::uint64_t seed = 0;
  // Picks out_scale before training so the farthest safe sample starts on
  // the target level set.
  bool auto_out_scale = true;
  // Called after every epoch with (epoch, mean total loss).
  std::function<void(int, double)> on_epoch;

  void Validate() const;
};

struct LossParts {
  double total = 0.0;
  double safe = 0.0;
  double unsafe = 0.0;
  double task = 0.0;
};

struct TrainReport {
  std::vector<double> total, safe, unsafe, task;  // one entry per epoch
  double max_safe_violation = 0.0;   // max_i (V(x_i) - c_i)
  double min_unsafe_margin = 0.0;    // min_j (V(x_j) - c_bar)
  double safe_fraction = 0.0;        // share of safe samples with V <= c_i
  double unsafe_fraction = 0.0;      // share of unsafe samples with V >= c_bar
  double level_c = 0.0;
  double ball_scale = 1.0;
  double seconds = 0.0;
};

// V(x) = lambda/2 |ball_scale * g(x)|^2, the goal-centred Lyapunov value.
// Invariant under ball rescaling, so it can be compared with labels before
// and after calibration.
double LyapunovValue(const BiLipMap& map, const StateVec& x, double lambda);

// L_safe = mean max(V - c_i, 0)^2, L_unsafe = mean max(c_j - V, 0)^2.
LossParts SeparationLoss(const BiLipMap& map, const LabeledDatasets& data, double lambda);

// Gradient of SeparationLoss().total with respect to Params(). The shift is
// treated as a function of the parameters (the map stays goal-centred), so
// the result matches finite differences of loss(SetParams(theta)).
StateVec SeparationLossGradient(const BiLipMap& map, const LabeledDatasets& data,
                                double lambda, LossParts* parts = nullptr);

// L_task = mean |xdot_k - f(x_k, x*_k)|^2 with f the natural gradient field.
double DemoLoss(const BiLipMap& map, const std::vector<DemoTriple>& demo, double lambda);
StateVec DemoLossGradient(const BiLipMap& map, const std::vector<DemoTriple>& demo,
                          double lambda, double* loss = nullptr);

class Adam {
 public:
  Adam(Eigen::Index size, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void Step(StateVec& theta, const StateVec& grad);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  StateVec m_, v_;
  long t_ = 0;
};

// Centres the input normalization on the safe samples' bounding box and
// scales its half-diagonal to in_extent.
void FitInputNormalization(BiLipMap& map, const LabeledDatasets& data, double in_extent);

// out_scale such that max_i lambda/2 |g(x_i)|^2 = c_bar + delta/2 at the
// current parameters.
double AutoOutScale(const BiLipMap& map, const LabeledDatasets& data, double lambda);

// Minibatch Adam over shuffled safe and unsafe samples. Deterministic for a
// given seed. Throws NumericalError on a non-finite loss.
std::pair<BiLipMap, TrainReport> Train(BiLipMap map, const LabeledDatasets& data,
                                       const TrainConfig& config);

struct Calibration {
  double level_c = 0.0;
  double ball_scale = 1.0;
  double max_safe_excess = 0.0;    // max_i (V(x_i) - c)
  double min_unsafe_margin = 0.0;  // min_j (V(x_j) - c)
  bool separated = false;          // all safe V <= c < all unsafe V
};

// c = c_bar + delta/2, then rescales g so {V = c} maps onto the unit sphere.
Calibration CalibrateLevel(BiLipMap& map, const LabeledDatasets& data, double lambda);

// Fills the separation statistics of a report from the current map.
void SummarizeSeparation(const BiLipMap& map, const LabeledDatasets& data, double lambda,
                         TrainReport* report);

}  // namespace safeflow

#endif  // SAFEFLOW_TRAIN_H_
