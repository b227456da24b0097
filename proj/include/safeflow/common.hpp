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

#ifndef SAFEFLOW_COMMON_H_
#define SAFEFLOW_COMMON_H_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace safeflow {

using StateVec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr int kFileFormatVersion = 1;

// Bad user input: malformed files, violated preconditions, unsafe goals.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: non-finite values, ill-conditioned Jacobians.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed-point inversion of a residual block ran out of iterations.
class NonConvergence : public NumericalError {
 public:
  NonConvergence(int block, double residual, const std::string& what)
      : NumericalError(what), block_(block), residual_(residual) {}
  int block() const { return block_; }
  double residual() const { return residual_; }

 private:
  int block_;
  double residual_;
};

// n independent 64-bit seeds from one user seed (all 64 bits contribute).
inline std::vector<std::uint64_t> DeriveSeeds(std::uint64_t seed, std::size_t n) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::vector<std::uint32_t> raw(2 * n);
  seq.generate(raw.begin(), raw.end());
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
  }
  return out;
}

inline bool AllFinite(const StateVec& x) { return x.allFinite(); }

// Runs fn(i) for i in [0, count). Work is split into contiguous chunks so
// results written by index are independent of the thread count.
inline void ParallelFor(std::size_t count, int threads,
                        const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t end = std::min(count, (w + 1) * chunk);
        for (std::size_t i = w * chunk; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace safeflow

#endif  // SAFEFLOW_COMMON_H_
