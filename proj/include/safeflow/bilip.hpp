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

#ifndef SAFEFLOW_BILIP_H_
#define SAFEFLOW_BILIP_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "safeflow/common.hpp"
#include "safeflow/diffeo.hpp"

namespace safeflow {

struct BiLipConfig {
  int dim = 2;
  int pairs = 4;       // number of (orthogonal, residual) block pairs
  int width = 64;      // hidden width of each residual block
  double tau = 0.5;    // Lipschitz budget of each residual branch, in (0, 1)
  int radial_terms = 0;     // terms of the radial output profile; 0 disables it
  double radial_tau = 0.9;  // slope budget of the radial profile, in (0, 1)
};

// Orthogonal block y = Q u with Q the Cayley transform of a skew matrix.
struct OrthBlock {
  StateVec skew;  // strict upper triangle of A, row by row
  Mat q;          // (I - A)^{-1} (I + A)
  Mat b;          // (I - A)^{-1}
};

// Residual block y = u + tau * W2n sigma(W1n u + b1) + b2, where
// Wn = W / sqrt(1 + |W|_F^2) keeps |Wn|_2 <= |Wn|_F < 1 and
// sigma_i(p) = psi_i tanh(p / psi_i) with psi_i = exp(d_i) is 1-Lipschitz.
struct ResBlock {
  double tau = 0.5;
  Mat w1;
  StateVec b1;
  StateVec d;  // log activation sharpness per hidden unit
  Mat w2;
  StateVec b2;
  Mat w1n;
  Mat w2n;
  Eigen::ArrayXd psi;

  // Hidden activation for pre-activations p (one sample per column).
  Mat Activate(const Mat& p) const {
    return ((p.array().colwise() / psi).tanh().colwise() * psi).matrix();
  }
  // u -> tau * W2n sigma(W1n u + b1) + b2.
  StateVec Branch(const StateVec& u) const {
    return tau * (w2n * Activate(w1n * u + b1)) + b2;
  }
};

// Radial map R(w) = rho(|w|) w / |w| about the goal image, with
//   rho(s) = sigma q + sigma tau sum_j a_j (L(b_j (q - c_j)) - L(-b_j c_j)) / b_j,
// q = s / sigma, L = log cosh, b_j = exp(log_beta_j) and
// a = alpha / (sqrt(J) sqrt(1 + |alpha|^2)) so that sum |a_j| < 1. Hence
// rho' lies in (1 - tau, 1 + tau), and so do the singular values of R.
struct RadialProfile {
  double tau = 0.9;
  double sigma = 1.0;  // length scale, fixed during training
  StateVec alpha;
  StateVec log_beta;
  StateVec gamma;
  StateVec a;     // cached normalized weights
  StateVec beta;  // cached exp(log_beta)

  int terms() const { return static_cast<int>(alpha.size()); }
  void Refresh();
  // rho(s), rho'(s) and rho''(s).
  void Eval(double s, double* rho, double* drho, double* ddrho) const;
  // Solves rho(s) = r for s >= 0.
  double Invert(double r) const;
  // Adds c_rho * d rho(s) / d theta + c_drho * d rho'(s) / d theta to the
  // gradients for (a, log_beta, gamma). The first is taken with respect to
  // the normalized weights a; callers chain it onto alpha.
  void AccumulateGrad(double s, double c_rho, double c_drho, StateVec& g_a,
                      StateVec& g_log_beta, StateVec& g_gamma) const;
};

struct InverseOptions {
  double tol = 1e-9;
  int max_iter = 200;
};

struct InverseStats {
  std::vector<int> iterations;         // per residual block, in solve order
  std::vector<double> max_contraction;  // largest step ratio seen per block
};

// Certified bi-Lipschitz map
//   g(x) = R(out_scale * N(in_scale * (x - in_center)) - shift) / ball_scale
// where N alternates orthogonal and contractive residual blocks and R is an
// optional radial profile about the origin.
class BiLipMap : public Diffeo {
 public:
  // Zero residual weights and identity rotations: g(x) = x.
  static BiLipMap Identity(const BiLipConfig& config);
  // Gaussian weights with standard deviations w1_std/w2_std, uniform biases
  // in [-bias_range, bias_range], small random rotations.
  static BiLipMap Random(const BiLipConfig& config, std::uint64_t seed,
                         double w1_std = 1.0, double w2_std = 0.1,
                         double bias_range = 2.0);

  int dim() const override { return dim_; }
  int pairs() const { return static_cast<int>(res_.size()); }
  int width() const { return res_.empty() ? 0 : static_cast<int>(res_[0].b1.size()); }

  StateVec Forward(const StateVec& x) const override;
  Mat Jacobian(const StateVec& x) const override;
  StateVec Inverse(const StateVec& z, double tol) const override {
    return Inverse(z, InverseOptions{tol, inverse_options_.max_iter});
  }
  // Inverts blocks in reverse order: orthogonal blocks by transpose, residual
  // blocks by Banach iteration. Throws NonConvergence on iteration overrun.
  StateVec Inverse(const StateVec& z, const InverseOptions& options,
                   InverseStats* stats = nullptr) const;
  std::optional<CertBounds> Bounds() const override { return CertifiedBounds(); }
  CertBounds CertifiedBounds() const;

  // Vector-Jacobian product of Forward(x) with respect to every learnable
  // parameter. The shift is held fixed.
  StateVec ParamGradient(const StateVec& x, const StateVec& cotangent) const;
  // Vector-Jacobian product of RawOutput(x) with respect to the parameters.
  StateVec RawParamGradient(const StateVec& x, const StateVec& cotangent) const;

  // Sets the shift so that Forward(goal) == 0 and remembers the goal; later
  // parameter updates recenter automatically.
  void SetGoalCenter(const StateVec& goal);
  // Explicit shift without a remembered goal.
  void SetShift(const StateVec& shift);
  void SetBallScale(double r);
  void SetOutScale(double s);
  void SetInputNormalization(const StateVec& center, double scale);
  // Length scale of the radial profile; no-op without one.
  void SetRadialScale(double sigma);

  int ParamCount() const;
  StateVec Params() const;
  void SetParams(const StateVec& theta);

  // Batched evaluation (one sample per column) with optional forward-mode
  // tangents. The tape records what BackwardBatch needs.
  struct Tape {
    Mat x;
    std::vector<Mat> orth_in, res_in, pre, squashed;  // squashed = tanh(p / psi)
    Mat centered;  // raw output minus shift, the radial input
    bool has_tangent = false;
    std::vector<Mat> t_orth_in, t_res_in, t_pre;
    Mat t_centered;
  };
  Mat ForwardBatch(const Mat& x, Tape* tape = nullptr,
                   const Mat* tangent_in = nullptr, Mat* tangent_out = nullptr) const;
  // Reverse pass for cotangents on the outputs (and on the output tangents
  // when the tape carries tangents). Returns the parameter gradient; the
  // input cotangent is written to x_bar when given, and the cotangent on the
  // raw output summed over samples to raw_bar_sum (the shift receives its
  // negative).
  StateVec BackwardBatch(const Tape& tape, const Mat& z_bar,
                         const Mat* tangent_bar = nullptr, Mat* x_bar = nullptr,
                         StateVec* raw_bar_sum = nullptr) const;

  // Pre-shift raw output out_scale * N(in_scale * (x - in_center)).
  StateVec RawOutput(const StateVec& x) const;

  const std::vector<OrthBlock>& orth_blocks() const { return orth_; }
  const std::vector<ResBlock>& res_blocks() const { return res_; }
  const std::optional<RadialProfile>& radial() const { return radial_; }
  double in_scale() const { return in_scale_; }
  const StateVec& in_center() const { return in_center_; }
  double out_scale() const { return out_scale_; }
  const StateVec& shift() const { return shift_; }
  double ball_scale() const { return ball_scale_; }
  const std::optional<StateVec>& goal() const { return goal_; }
  const InverseOptions& inverse_options() const { return inverse_options_; }
  void set_inverse_options(const InverseOptions& o) { inverse_options_ = o; }

  // Direct construction from stored blocks (model files).
  BiLipMap(int dim, std::vector<OrthBlock> orth, std::vector<ResBlock> res,
           std::optional<RadialProfile> radial = std::nullopt);

 private:
  BiLipMap() = default;
  void Refresh();  // recompute cached Q and normalized weights
  void Recenter();
  // Backward through the network only, from cotangents on the raw output.
  StateVec BackwardRaw(const Tape& tape, Mat ybar, Mat tybar, bool with_tangent,
                       Mat* x_bar) const;

  int dim_ = 0;
  std::vector<OrthBlock> orth_;
  std::vector<ResBlock> res_;
  std::optional<RadialProfile> radial_;
  double in_scale_ = 1.0;
  StateVec in_center_;
  double out_scale_ = 1.0;
  StateVec shift_;
  double ball_scale_ = 1.0;
  std::optional<StateVec> goal_;
  InverseOptions inverse_options_;
};

// Builds the skew-symmetric matrix from its strict upper triangle.
Mat SkewFromParams(const StateVec& skew, int n);

}  // namespace safeflow

#endif  // SAFEFLOW_BILIP_H_
