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

#include "numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace diloco {
namespace {

void check_same_length(const ParamVector& a, const ParamVector& b,
                       const char* op) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kDimension, std::string(op) + ": length mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  }
}

void check_finite(const ParamVector& v, const char* op) {
  if (!v.all_finite()) {
    fail(ErrorCode::kNumeric, std::string(op) + ": non-finite result");
  }
}

}  // namespace

ParamVector::ParamVector(std::vector<double> values)
    : values_(std::move(values)) {
  if (!all_finite()) {
    fail(ErrorCode::kNumeric, "ParamVector: non-finite element");
  }
}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void ParamVector::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

ParamVector axpy(const ParamVector& y, double a, const ParamVector& x) {
  ParamVector out = y;
  axpy_inplace(out, a, x);
  return out;
}

void axpy_inplace(ParamVector& y, double a, const ParamVector& x) {
  check_same_length(y, x, "axpy");
  auto yv = y.mutable_view();
  auto xv = x.view();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += a * xv[i];
  check_finite(y, "axpy");
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  check_same_length(a, b, "subtract");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  check_finite(out, "subtract");
  return out;
}

ParamVector weighted_mean(std::span<const ParamVector> vs,
                          std::span<const double> ws) {
  require(!vs.empty(), ErrorCode::kInvalidArgument,
          "weighted_mean: empty input");
  require(vs.size() == ws.size(), ErrorCode::kInvalidArgument,
          "weighted_mean: vectors and weights differ in count");
  double total = 0.0;
  for (double w : ws) {
    require(std::isfinite(w) && w >= 0.0, ErrorCode::kInvalidArgument,
            "weighted_mean: weights must be finite and nonnegative");
    total += w;
  }
  require(total > 0.0, ErrorCode::kInvalidArgument,
          "weighted_mean: weights sum to zero");

  const std::size_t n = vs.front().size();
  ParamVector out(n);
  auto acc = out.mutable_view();
  for (std::size_t j = 0; j < vs.size(); ++j) {
    check_same_length(vs.front(), vs[j], "weighted_mean");
    const double w = ws[j];
    auto v = vs[j].view();
    for (std::size_t i = 0; i < n; ++i) acc[i] += w * v[i];
  }
  for (std::size_t i = 0; i < n; ++i) acc[i] /= total;
  check_finite(out, "weighted_mean");
  return out;
}

double dot(const ParamVector& x, const ParamVector& y) {
  check_same_length(x, y, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double l2_norm(const ParamVector& x) {
  double s = 0.0;
  for (double v : x.view()) s += v * v;
  return std::sqrt(s);
}

double cosine_similarity(const ParamVector& x, const ParamVector& y) {
  check_same_length(x, y, "cosine_similarity");
  const double nx = l2_norm(x);
  const double ny = l2_norm(y);
  if (nx == 0.0 || ny == 0.0) {
    fail(ErrorCode::kNumeric, "cosine_similarity: undefined for zero vector");
  }
  return std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
}

double max_abs_diff(const ParamVector& x, const ParamVector& y) {
  check_same_length(x, y, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m = std::max(m, std::abs(x[i] - y[i]));
  }
  return m;
}

}  // namespace diloco
