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

#include "compression.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "error.hpp"

namespace diloco {

ParamVector prune_outer_gradient(const ParamVector& delta, double frac,
                                 std::span<const NeuronGroup> groups) {
  require(frac >= 0.0 && frac < 1.0, ErrorCode::kInvalidArgument,
          "prune_frac must lie in [0, 1)");
  ParamVector out = delta;
  auto v = out.mutable_view();
  std::vector<std::size_t> idx;
  for (const NeuronGroup& g : groups) {
    idx.clear();
    for (std::size_t i = 0; i < g.row_len; ++i) idx.push_back(g.row_begin + i);
    if (g.bias != NeuronGroup::kNoBias) idx.push_back(g.bias);
    for (std::size_t i : idx) {
      require(i < v.size(), ErrorCode::kDimension,
              "prune: neuron group exceeds the outer gradient");
    }

    double pos = 0.0;
    double neg = 0.0;
    for (std::size_t i : idx) {
      if (v[i] > 0.0) pos += v[i];
      if (v[i] < 0.0) neg -= v[i];
    }
    const bool keep_positive = pos >= neg;
    std::size_t zeros = 0;
    for (std::size_t i : idx) {
      if ((keep_positive && v[i] < 0.0) || (!keep_positive && v[i] > 0.0)) {
        v[i] = 0.0;
      }
      if (v[i] == 0.0) ++zeros;
    }

    const auto need = static_cast<std::size_t>(
        std::ceil(frac * static_cast<double>(idx.size())));
    if (zeros >= need) continue;
    std::vector<std::size_t> alive;
    for (std::size_t i : idx) {
      if (v[i] != 0.0) alive.push_back(i);
    }
    std::stable_sort(alive.begin(), alive.end(), [&](std::size_t a,
                                                     std::size_t b) {
      return std::abs(v[a]) < std::abs(v[b]);
    });
    for (std::size_t j = 0; j < need - zeros; ++j) v[alive[j]] = 0.0;
  }
  return out;
}

}  // namespace diloco
