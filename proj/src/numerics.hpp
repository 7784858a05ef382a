// Copyright 2026 The diloco-cpp Authors.
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

#ifndef DILOCO_NUMERICS_HPP_
#define DILOCO_NUMERICS_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace diloco {

// Flat vector of model parameters (also used for deltas and gradients).
// Length is fixed at construction. Every sum over elements runs in ascending
// index order so results are bit-reproducible.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t n) : values_(n, 0.0) {}
  // Throws kNumeric if any value is NaN or infinite.
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values)
      : ParamVector(std::vector<double>(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> view() const noexcept { return values_; }
  std::span<double> mutable_view() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept;
  void fill(double v);

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

// y + a*x. Throws kDimension on length mismatch.
ParamVector axpy(const ParamVector& y, double a, const ParamVector& x);

// In-place y += a*x.
void axpy_inplace(ParamVector& y, double a, const ParamVector& x);

// a - b
ParamVector subtract(const ParamVector& a, const ParamVector& b);

// sum_i w_i v_i / sum_i w_i, accumulated in index order. Weights must be
// nonnegative with a positive sum.
ParamVector weighted_mean(std::span<const ParamVector> vs,
                          std::span<const double> ws);

double dot(const ParamVector& x, const ParamVector& y);
double l2_norm(const ParamVector& x);

// x.y / (|x||y|), clamped to [-1, 1]. Throws kNumeric for a zero vector.
double cosine_similarity(const ParamVector& x, const ParamVector& y);

double max_abs_diff(const ParamVector& x, const ParamVector& y);

}  // namespace diloco

#endif  // DILOCO_NUMERICS_HPP_
