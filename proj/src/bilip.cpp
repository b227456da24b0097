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

#include "safeflow/bilip.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>

namespace safeflow {
namespace {

int SkewCount(int n) { return n * (n - 1) / 2; }

// Wn = W / sqrt(1 + |W|_F^2).
Mat NormalizeWeight(const Mat& w) {
  return w / std::sqrt(1.0 + w.squaredNorm());
}

// Pulls a gradient on Wn back to W.
Mat NormalizeWeightGrad(const Mat& w, const Mat& g_wn) {
  const double s = 1.0 / std::sqrt(1.0 + w.squaredNorm());
  return s * g_wn - (s * s * s * (w.array() * g_wn.array()).sum()) * w;
}

}  // namespace

Mat SkewFromParams(const StateVec& skew, int n) {
  Mat a = Mat::Zero(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      a(i, j) = skew[k];
      a(j, i) = -skew[k];
      ++k;
    }
  }
  return a;
}

namespace {

// log cosh x without overflow.
double LogCosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

}  // namespace

void RadialProfile::Refresh() {
  const double j = std::max(1, terms());
  a = alpha / (std::sqrt(j) * std::sqrt(1.0 + alpha.squaredNorm()));
  beta = log_beta.array().exp().matrix();
}

void RadialProfile::Eval(double s, double* rho, double* drho, double* ddrho) const {
  const double q = s / sigma;
  double r = q;
  double d = 1.0;
  double dd = 0.0;
  for (int j = 0; j < terms(); ++j) {
    const double b = beta[j];
    const double t = std::tanh(b * (q - gamma[j]));
    r += tau * a[j] * (LogCosh(b * (q - gamma[j])) - LogCosh(-b * gamma[j])) / b;
    d += tau * a[j] * t;
    dd += tau * a[j] * b * (1.0 - t * t);
  }
  if (rho) *rho = sigma * r;
  if (drho) *drho = d;
  if (ddrho) *ddrho = dd / sigma;
}

double RadialProfile::Invert(double r) const {
  if (r <= 0.0) return 0.0;
  double lo = r / (1.0 + tau);
  double hi = r / (1.0 - tau);
  double s = r;
  for (int it = 0; it < 200; ++it) {
    double rho = 0.0;
    double drho = 1.0;
    Eval(s, &rho, &drho, nullptr);
    const double f = rho - r;
    if (f > 0.0) {
      hi = s;
    } else {
      lo = s;
    }
    double next = s - f / drho;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 1e-15 * std::max(1.0, s) || hi - lo <= 1e-15 * hi) {
      return next;
    }
    s = next;
  }
  return s;
}

void RadialProfile::AccumulateGrad(double s, double c_rho, double c_drho, StateVec& g_alpha,
                                   StateVec& g_log_beta, StateVec& g_gamma) const {
  const double q = s / sigma;
  for (int j = 0; j < terms(); ++j) {
    const double b = beta[j];
    const double c = gamma[j];
    const double t = std::tanh(b * (q - c));
    const double t0 = std::tanh(-b * c);
    const double span = (LogCosh(b * (q - c)) - LogCosh(-b * c)) / b;
    const double sech2 = 1.0 - t * t;
    g_alpha[j] += c_rho * sigma * tau * span + c_drho * tau * t;
    g_log_beta[j] += c_rho * sigma * tau * a[j] * (t * (q - c) + t0 * c - span) +
                     c_drho * tau * a[j] * sech2 * (q - c) * b;
    g_gamma[j] += c_rho * sigma * tau * a[j] * (t0 - t) - c_drho * tau * a[j] * sech2 * b;
  }
}

BiLipMap::BiLipMap(int dim, std::vector<OrthBlock> orth, std::vector<ResBlock> res,
                   std::optional<RadialProfile> radial)
    : dim_(dim), orth_(std::move(orth)), res_(std::move(res)), radial_(std::move(radial)) {
  if (dim_ < 1) throw InputError("dimension must be >= 1");
  if (orth_.size() != res_.size()) {
    throw InputError("orthogonal and residual blocks must alternate in pairs");
  }
  for (const auto& o : orth_) {
    if (o.skew.size() != SkewCount(dim_)) throw InputError("skew size mismatch");
  }
  for (const auto& r : res_) {
    if (!(r.tau > 0.0 && r.tau < 1.0)) throw InputError("tau must lie in (0, 1)");
    const auto w = r.b1.size();
    if (r.w1.rows() != w || r.w1.cols() != dim_ || r.w2.rows() != dim_ ||
        r.w2.cols() != w || r.b2.size() != dim_ || r.d.size() != w) {
      throw InputError("residual block shape mismatch");
    }
  }
  if (radial_) {
    const auto& p = *radial_;
    if (!(p.tau > 0.0 && p.tau < 1.0)) throw InputError("radial tau must lie in (0, 1)");
    if (!(p.sigma > 0.0)) throw InputError("radial scale must be > 0");
    if (p.log_beta.size() != p.alpha.size() || p.gamma.size() != p.alpha.size()) {
      throw InputError("radial profile shape mismatch");
    }
  }
  in_center_ = StateVec::Zero(dim_);
  shift_ = StateVec::Zero(dim_);
  Refresh();
}

BiLipMap BiLipMap::Identity(const BiLipConfig& config) {
  if (config.pairs < 0 || config.width < 1) throw InputError("bad network shape");
  std::vector<OrthBlock> orth;
  std::vector<ResBlock> res;
  const int n = config.dim;
  for (int k = 0; k < config.pairs; ++k) {
    orth.push_back({StateVec::Zero(SkewCount(n)), Mat(), Mat()});
    ResBlock r;
    r.tau = config.tau;
    r.w1 = Mat::Zero(config.width, n);
    r.b1 = StateVec::Zero(config.width);
    r.d = StateVec::Zero(config.width);
    r.w2 = Mat::Zero(n, config.width);
    r.b2 = StateVec::Zero(n);
    res.push_back(std::move(r));
  }
  std::optional<RadialProfile> radial;
  if (config.radial_terms < 0) throw InputError("radial_terms must be >= 0");
  if (config.radial_terms > 0) {
    RadialProfile p;
    const int j = config.radial_terms;
    p.tau = config.radial_tau;
    p.alpha = StateVec::Zero(j);
    p.log_beta = StateVec::Constant(j, std::log(10.0));
    p.gamma = StateVec::LinSpaced(j, 0.25, 1.5);
    radial = std::move(p);
  }
  return BiLipMap(n, std::move(orth), std::move(res), std::move(radial));
}

BiLipMap BiLipMap::Random(const BiLipConfig& config, std::uint64_t seed,
                          double w1_std, double w2_std, double bias_range) {
  BiLipMap map = Identity(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-bias_range, bias_range);
  for (auto& o : map.orth_) {
    for (int i = 0; i < o.skew.size(); ++i) o.skew[i] = 0.5 * normal(rng);
  }
  for (auto& r : map.res_) {
    for (int i = 0; i < r.w1.size(); ++i) r.w1.data()[i] = w1_std * normal(rng);
    for (int i = 0; i < r.b1.size(); ++i) r.b1[i] = uniform(rng);
    for (int i = 0; i < r.w2.size(); ++i) r.w2.data()[i] = w2_std * normal(rng);
  }
  map.Refresh();
  return map;
}

void BiLipMap::Refresh() {
  const Mat eye = Mat::Identity(dim_, dim_);
  for (auto& o : orth_) {
    const Mat a = SkewFromParams(o.skew, dim_);
    o.b = (eye - a).inverse();
    o.q = o.b * (eye + a);
  }
  for (auto& r : res_) {
    r.w1n = NormalizeWeight(r.w1);
    r.w2n = NormalizeWeight(r.w2);
    r.psi = r.d.array().exp();
  }
  if (radial_) radial_->Refresh();
}

namespace {

// y = R(w) and, when jac is given, the symmetric Jacobian of R at w.
StateVec ApplyRadial(const RadialProfile& p, const StateVec& w, Mat* jac) {
  const double s = w.norm();
  double rho = 0.0;
  double drho = 1.0;
  p.Eval(s, &rho, &drho, nullptr);
  if (s == 0.0) {
    if (jac) *jac = drho * Mat::Identity(w.size(), w.size());
    return w;
  }
  const double phi = rho / s;
  if (jac) {
    const StateVec n = w / s;
    *jac = phi * Mat::Identity(w.size(), w.size()) + (drho - phi) * n * n.transpose();
  }
  return phi * w;
}

}  // namespace

StateVec BiLipMap::RawOutput(const StateVec& x) const {
  StateVec u = in_scale_ * (x - in_center_);
  for (std::size_t k = 0; k < res_.size(); ++k) {
    u = orth_[k].q * u;
    u += res_[k].Branch(u);
  }
  return out_scale_ * u;
}

StateVec BiLipMap::Forward(const StateVec& x) const {
  const StateVec w = RawOutput(x) - shift_;
  return (radial_ ? ApplyRadial(*radial_, w, nullptr) : w) / ball_scale_;
}

Mat BiLipMap::Jacobian(const StateVec& x) const {
  StateVec u = in_scale_ * (x - in_center_);
  Mat jac = Mat::Identity(dim_, dim_);
  for (std::size_t k = 0; k < res_.size(); ++k) {
    u = orth_[k].q * u;
    jac = orth_[k].q * jac;
    const ResBlock& r = res_[k];
    const Eigen::ArrayXd t = ((r.w1n * u + r.b1).array() / r.psi).tanh();
    const Mat block = Mat::Identity(dim_, dim_) +
                      r.tau * r.w2n * (1.0 - t.square()).matrix().asDiagonal() * r.w1n;
    u += r.tau * (r.w2n * (t * r.psi).matrix()) + r.b2;
    jac = block * jac;
  }
  if (radial_) {
    Mat jr;
    ApplyRadial(*radial_, out_scale_ * u - shift_, &jr);
    jac = jr * jac;
  }
  return (out_scale_ * in_scale_ / ball_scale_) * jac;
}

StateVec BiLipMap::Inverse(const StateVec& z, const InverseOptions& options,
                           InverseStats* stats) const {
  if (!(options.tol > 0.0)) throw InputError("inversion tol must be > 0");
  if (stats) {
    stats->iterations.clear();
    stats->max_contraction.clear();
  }
  // Per-block tolerance so the accumulated forward residual stays below tol:
  // an error left in block k is amplified by at most prod_{j>k} (1 + tau_j).
  const int blocks = static_cast<int>(res_.size());
  std::vector<double> block_tol(blocks);
  double downstream = radial_ ? 1.0 + radial_->tau : 1.0;
  for (int k = blocks - 1; k >= 0; --k) {
    block_tol[k] = options.tol * ball_scale_ /
                   (out_scale_ * downstream * std::max(1, blocks));
    downstream *= 1.0 + res_[k].tau;
  }

  StateVec w = ball_scale_ * z;
  if (radial_) {
    const double r = w.norm();
    if (r > 0.0) w *= radial_->Invert(r) / r;
  }
  StateVec y = (w + shift_) / out_scale_;
  for (int k = blocks - 1; k >= 0; --k) {
    const ResBlock& r = res_[k];
    StateVec u = y;
    double prev_step = -1.0;
    double worst_ratio = 0.0;
    int it = 0;
    while (true) {
      if (it >= options.max_iter) {
        throw NonConvergence(k, prev_step,
                             "inverse did not converge in block " + std::to_string(k) +
                                 " (residual " + std::to_string(prev_step) + ")");
      }
      ++it;
      StateVec next = y - r.Branch(u);
      const double step = (next - u).norm();
      if (!std::isfinite(step)) {
        throw NumericalError("non-finite iterate inverting block " + std::to_string(k));
      }
      if (prev_step > 1e-13) worst_ratio = std::max(worst_ratio, step / prev_step);
      u = std::move(next);
      if (step <= block_tol[k]) break;
      prev_step = step;
    }
    if (stats) {
      stats->iterations.push_back(it);
      stats->max_contraction.push_back(worst_ratio);
    }
    y = orth_[k].q.transpose() * u;
  }
  return y / in_scale_ + in_center_;
}

CertBounds BiLipMap::CertifiedBounds() const {
  double lo = 1.0;
  double hi = 1.0;
  for (const auto& r : res_) {
    lo *= 1.0 - r.tau;
    hi *= 1.0 + r.tau;
  }
  if (radial_) {
    lo *= 1.0 - radial_->tau;
    hi *= 1.0 + radial_->tau;
  }
  const double scale = in_scale_ * out_scale_ / ball_scale_;
  return {scale * lo, scale * hi};
}

int BiLipMap::ParamCount() const {
  int count = 0;
  for (std::size_t k = 0; k < res_.size(); ++k) {
    count += static_cast<int>(orth_[k].skew.size() + res_[k].w1.size() +
                              2 * res_[k].b1.size() + res_[k].w2.size() + res_[k].b2.size());
  }
  if (radial_) count += 3 * radial_->terms();
  return count;
}

StateVec BiLipMap::Params() const {
  StateVec theta(ParamCount());
  Eigen::Index at = 0;
  auto put = [&](const double* data, Eigen::Index size) {
    theta.segment(at, size) = Eigen::Map<const StateVec>(data, size);
    at += size;
  };
  for (std::size_t k = 0; k < res_.size(); ++k) {
    put(orth_[k].skew.data(), orth_[k].skew.size());
    put(res_[k].w1.data(), res_[k].w1.size());
    put(res_[k].b1.data(), res_[k].b1.size());
    put(res_[k].d.data(), res_[k].d.size());
    put(res_[k].w2.data(), res_[k].w2.size());
    put(res_[k].b2.data(), res_[k].b2.size());
  }
  if (radial_) {
    put(radial_->alpha.data(), radial_->terms());
    put(radial_->log_beta.data(), radial_->terms());
    put(radial_->gamma.data(), radial_->terms());
  }
  return theta;
}

void BiLipMap::SetParams(const StateVec& theta) {
  if (theta.size() != ParamCount()) throw InputError("parameter count mismatch");
  if (!theta.allFinite()) throw NumericalError("non-finite parameters");
  Eigen::Index at = 0;
  auto take = [&](double* data, Eigen::Index size) {
    Eigen::Map<StateVec>(data, size) = theta.segment(at, size);
    at += size;
  };
  for (std::size_t k = 0; k < res_.size(); ++k) {
    take(orth_[k].skew.data(), orth_[k].skew.size());
    take(res_[k].w1.data(), res_[k].w1.size());
    take(res_[k].b1.data(), res_[k].b1.size());
    take(res_[k].d.data(), res_[k].d.size());
    take(res_[k].w2.data(), res_[k].w2.size());
    take(res_[k].b2.data(), res_[k].b2.size());
  }
  if (radial_) {
    take(radial_->alpha.data(), radial_->terms());
    take(radial_->log_beta.data(), radial_->terms());
    take(radial_->gamma.data(), radial_->terms());
  }
  Refresh();
  Recenter();
}

void BiLipMap::SetGoalCenter(const StateVec& goal) {
  if (goal.size() != dim_ || !goal.allFinite()) throw InputError("invalid goal");
  goal_ = goal;
  Recenter();
}

void BiLipMap::Recenter() {
  if (goal_) shift_ = RawOutput(*goal_);
}

void BiLipMap::SetShift(const StateVec& shift) {
  if (shift.size() != dim_ || !shift.allFinite()) throw InputError("invalid shift");
  goal_.reset();
  shift_ = shift;
}

void BiLipMap::SetBallScale(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw InputError("ball scale must be > 0");
  ball_scale_ = r;
}

void BiLipMap::SetOutScale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw InputError("out scale must be > 0");
  out_scale_ = s;
  Recenter();
}

void BiLipMap::SetInputNormalization(const StateVec& center, double scale) {
  if (center.size() != dim_ || !center.allFinite()) throw InputError("invalid center");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InputError("in scale must be > 0");
  in_center_ = center;
  in_scale_ = scale;
  Recenter();
}

void BiLipMap::SetRadialScale(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("radial scale must be > 0");
  if (radial_) radial_->sigma = sigma;
}

Mat BiLipMap::ForwardBatch(const Mat& x, Tape* tape, const Mat* tangent_in,
                           Mat* tangent_out) const {
  const bool with_tangent = tangent_in != nullptr;
  Mat u = (in_scale_ * (x.colwise() - in_center_));
  Mat tu;
  if (with_tangent) tu = in_scale_ * *tangent_in;
  if (tape) {
    tape->x = x;
    tape->has_tangent = with_tangent;
    tape->orth_in.assign(res_.size(), Mat());
    tape->res_in.assign(res_.size(), Mat());
    tape->pre.assign(res_.size(), Mat());
    tape->squashed.assign(res_.size(), Mat());
    tape->t_orth_in.assign(with_tangent ? res_.size() : 0, Mat());
    tape->t_res_in.assign(with_tangent ? res_.size() : 0, Mat());
    tape->t_pre.assign(with_tangent ? res_.size() : 0, Mat());
  }
  for (std::size_t k = 0; k < res_.size(); ++k) {
    if (tape) tape->orth_in[k] = u;
    if (with_tangent && tape) tape->t_orth_in[k] = tu;
    u = orth_[k].q * u;
    if (with_tangent) tu = orth_[k].q * tu;

    const ResBlock& r = res_[k];
    Mat p = (r.w1n * u).colwise() + r.b1;
    Mat t = (p.array().colwise() / r.psi).tanh().matrix();
    if (tape) tape->res_in[k] = u;
    Mat next = u + r.tau * (r.w2n * (t.array().colwise() * r.psi).matrix());
    next.colwise() += r.b2;
    if (with_tangent) {
      Mat tp = r.w1n * tu;
      if (tape) {
        tape->t_res_in[k] = tu;
        tape->t_pre[k] = tp;
      }
      const Mat th = ((1.0 - t.array().square()) * tp.array()).matrix();
      tu = tu + r.tau * (r.w2n * th);
    }
    if (tape) {
      tape->pre[k] = std::move(p);
      tape->squashed[k] = std::move(t);
    }
    u = std::move(next);
  }
  Mat w = (out_scale_ * u).colwise() - shift_;
  Mat tw;
  if (with_tangent) tw = out_scale_ * tu;
  if (tape) {
    tape->centered = w;
    if (with_tangent) tape->t_centered = tw;
  }
  if (radial_) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      const double s = w.col(c).norm();
      double rho = 0.0;
      double drho = 1.0;
      radial_->Eval(s, &rho, &drho, nullptr);
      if (s == 0.0) {
        if (with_tangent) tw.col(c) *= drho;
        continue;
      }
      const double phi = rho / s;
      if (with_tangent) {
        const StateVec n = w.col(c) / s;
        const double along = n.dot(tw.col(c));
        tw.col(c) = phi * tw.col(c) + ((drho - phi) * along) * n;
      }
      w.col(c) *= phi;
    }
  }
  if (with_tangent && tangent_out) *tangent_out = tw / ball_scale_;
  return w / ball_scale_;
}

StateVec BiLipMap::BackwardBatch(const Tape& tape, const Mat& z_bar,
                                 const Mat* tangent_bar, Mat* x_bar,
                                 StateVec* raw_bar_sum) const {
  const bool with_tangent = tape.has_tangent && tangent_bar != nullptr;
  Mat wbar = z_bar / ball_scale_;
  Mat twbar;
  if (with_tangent) twbar = *tangent_bar / ball_scale_;
  StateVec g_alpha, g_log_beta, g_gamma;
  if (radial_) {
    const RadialProfile& p = *radial_;
    g_alpha = StateVec::Zero(p.terms());
    g_log_beta = StateVec::Zero(p.terms());
    g_gamma = StateVec::Zero(p.terms());
    for (Eigen::Index c = 0; c < wbar.cols(); ++c) {
      const StateVec w = tape.centered.col(c);
      const double s = w.norm();
      double rho = 0.0;
      double drho = 1.0;
      double ddrho = 0.0;
      p.Eval(s, &rho, &drho, &ddrho);
      const StateVec ybar = wbar.col(c);
      if (s == 0.0) {
        wbar.col(c) = drho * ybar;
        if (with_tangent) {
          const StateVec tybar = twbar.col(c);
          p.AccumulateGrad(s, 0.0, tape.t_centered.col(c).dot(tybar), g_alpha, g_log_beta,
                           g_gamma);
          twbar.col(c) = drho * tybar;
        }
        continue;
      }
      const StateVec n = w / s;
      const double phi = rho / s;
      double c_rho = n.dot(ybar);
      double c_drho = 0.0;
      StateVec wb = phi * ybar + ((drho - phi) * n.dot(ybar)) * n;
      if (with_tangent) {
        // ydot = phi wdot + (rho' - phi) n (n . wdot).
        const StateVec tw = tape.t_centered.col(c);
        const StateVec tybar = twbar.col(c);
        const double a = n.dot(tw);
        const double cc = n.dot(tybar);
        const double d = tw.dot(tybar);
        const double dphi = (drho - phi) / s;
        wb += (dphi * d + (ddrho - dphi) * a * cc) * n +
              dphi * (cc * tw + a * tybar - (2.0 * a * cc) * n);
        c_rho += (d - a * cc) / s;
        c_drho += a * cc;
        twbar.col(c) = phi * tybar + ((drho - phi) * cc) * n;
      }
      p.AccumulateGrad(s, c_rho, c_drho, g_alpha, g_log_beta, g_gamma);
      wbar.col(c) = wb;
    }
  }
  if (raw_bar_sum) *raw_bar_sum = wbar.rowwise().sum();
  StateVec grad = BackwardRaw(tape, out_scale_ * wbar,
                              with_tangent ? Mat(out_scale_ * twbar) : Mat(), with_tangent,
                              x_bar);
  if (radial_) {
    const RadialProfile& p = *radial_;
    const int j = p.terms();
    // a = k alpha with k = 1 / (sqrt(J) sqrt(1 + |alpha|^2)).
    const double n2 = 1.0 + p.alpha.squaredNorm();
    const double k = 1.0 / (std::sqrt(static_cast<double>(std::max(1, j))) * std::sqrt(n2));
    const Eigen::Index at = grad.size() - 3 * j;
    grad.segment(at, j) = k * g_alpha - (k * p.alpha.dot(g_alpha) / n2) * p.alpha;
    grad.segment(at + j, j) = g_log_beta;
    grad.segment(at + 2 * j, j) = g_gamma;
  }
  return grad;
}

StateVec BiLipMap::BackwardRaw(const Tape& tape, Mat ybar, Mat tybar, bool with_tangent,
                               Mat* x_bar) const {
  const int n = dim_;
  StateVec grad = StateVec::Zero(ParamCount());
  // Offsets of each pair's parameter segment.
  std::vector<Eigen::Index> offset(res_.size() + 1, 0);
  for (std::size_t k = 0; k < res_.size(); ++k) {
    offset[k + 1] = offset[k] + orth_[k].skew.size() + res_[k].w1.size() +
                    2 * res_[k].b1.size() + res_[k].w2.size() + res_[k].b2.size();
  }

  for (int k = static_cast<int>(res_.size()) - 1; k >= 0; --k) {
    const ResBlock& r = res_[k];
    const Mat& u = tape.res_in[k];
    const Mat& p = tape.pre[k];
    const Eigen::ArrayXXd t = tape.squashed[k].array();
    const Eigen::ArrayXXd dh = 1.0 - t.square();

    Mat g_w2n = r.tau * ybar * (t.colwise() * r.psi).matrix().transpose();
    const StateVec g_b2 = ybar.rowwise().sum();
    Eigen::ArrayXXd hbar = (r.tau * r.w2n.transpose() * ybar).array();
    // d sigma / d d = psi t - p (1 - t^2).
    Eigen::ArrayXXd dbar = hbar * ((t.colwise() * r.psi) - p.array() * dh);
    Mat ubar = ybar;
    Mat pdotbar;
    Mat tubar;
    if (with_tangent) {
      const Eigen::ArrayXXd tp = tape.t_pre[k].array();
      g_w2n += r.tau * tybar * (dh * tp).matrix().transpose();
      const Eigen::ArrayXXd thbar = (r.tau * r.w2n.transpose() * tybar).array();
      pdotbar = (dh * thbar).matrix();
      // Through the slope 1 - t^2 with t = tanh(p / psi).
      const Eigen::ArrayXXd slope_bar = tp * thbar;
      dbar += 2.0 * t * dh * (p.array().colwise() / r.psi) * slope_bar;
      hbar -= 2.0 * (t.colwise() / r.psi) * slope_bar;
      tubar = tybar + r.w1n.transpose() * pdotbar;
    }
    const Mat pbar = (dh * hbar).matrix();
    Mat g_w1n = pbar * u.transpose();
    if (with_tangent) g_w1n += pdotbar * tape.t_res_in[k].transpose();
    const StateVec g_b1 = pbar.rowwise().sum();
    ubar += r.w1n.transpose() * pbar;

    Eigen::Index at = offset[k] + orth_[k].skew.size();
    const Mat g_w1 = NormalizeWeightGrad(r.w1, g_w1n);
    grad.segment(at, g_w1.size()) = Eigen::Map<const StateVec>(g_w1.data(), g_w1.size());
    at += g_w1.size();
    grad.segment(at, g_b1.size()) = g_b1;
    at += g_b1.size();
    grad.segment(at, g_b1.size()) = dbar.rowwise().sum().matrix();
    at += g_b1.size();
    const Mat g_w2 = NormalizeWeightGrad(r.w2, g_w2n);
    grad.segment(at, g_w2.size()) = Eigen::Map<const StateVec>(g_w2.data(), g_w2.size());
    at += g_w2.size();
    grad.segment(at, n) = g_b2;

    // Orthogonal block: y = Q u.
    const OrthBlock& o = orth_[k];
    const Mat& uin = tape.orth_in[k];
    Mat qbar = ubar * uin.transpose();
    if (with_tangent) qbar += tubar * tape.t_orth_in[k].transpose();
    const Mat abar =
        o.b.transpose() * qbar * (o.q + Mat::Identity(n, n)).transpose();
    Eigen::Index s = offset[k];
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) grad[s++] = abar(i, j) - abar(j, i);
    }
    ybar = o.q.transpose() * ubar;
    if (with_tangent) tybar = o.q.transpose() * tubar;
  }
  if (x_bar) *x_bar = in_scale_ * ybar;
  return grad;
}

StateVec BiLipMap::RawParamGradient(const StateVec& x, const StateVec& cotangent) const {
  if (cotangent.size() != dim_ || !cotangent.allFinite()) {
    throw InputError("cotangent must be finite with matching dimension");
  }
  Tape tape;
  ForwardBatch(x, &tape);
  return BackwardRaw(tape, out_scale_ * cotangent, Mat(), false, nullptr);
}

StateVec BiLipMap::ParamGradient(const StateVec& x, const StateVec& cotangent) const {
  if (cotangent.size() != dim_ || !cotangent.allFinite()) {
    throw InputError("cotangent must be finite with matching dimension");
  }
  Tape tape;
  ForwardBatch(x, &tape);
  return BackwardBatch(tape, cotangent);
}

}  // namespace safeflow
