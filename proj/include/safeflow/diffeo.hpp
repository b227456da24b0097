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

#ifndef SAFEFLOW_DIFFEO_H_
#define SAFEFLOW_DIFFEO_H_

#include <optional>

#include "safeflow/common.hpp"

namespace safeflow {

// Certified bi-Lipschitz constants: mu |dx| <= |dg| <= nu |dx|.
struct CertBounds {
  double mu = 1.0;
  double nu = 1.0;
  double distortion() const { return nu / mu; }
};

// A diffeomorphism of R^n with an evaluable Jacobian and inverse.
class Diffeo {
 public:
  virtual ~Diffeo() = default;

  virtual int dim() const = 0;
  virtual StateVec Forward(const StateVec& x) const = 0;
  virtual Mat Jacobian(const StateVec& x) const = 0;
  // Returns x with |Forward(x) - z| <= tol.
  virtual StateVec Inverse(const StateVec& z, double tol) const = 0;
  // Certified bounds when the construction provides them.
  virtual std::optional<CertBounds> Bounds() const { return std::nullopt; }
};

}  // namespace safeflow

#endif  // SAFEFLOW_DIFFEO_H_
