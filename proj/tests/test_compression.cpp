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


#include <doctest.h>

#include <cmath>

#include "compression.hpp"
#include "error.hpp"
#include "test_util.hpp"

using namespace diloco;

namespace {

std::vector<NeuronGroup> one_group(std::size_t n) {
  return {NeuronGroup{0, n, NeuronGroup::kNoBias}};
}

std::size_t zeros_in(const ParamVector& v, const NeuronGroup& g) {
  std::size_t z = 0;
  for (std::size_t i = 0; i < g.row_len; ++i) z += v[g.row_begin + i] == 0.0;
  if (g.bias != NeuronGroup::kNoBias) z += v[g.bias] == 0.0;
  return z;
}

}  // namespace

TEST_SUITE("compression") {

TEST_CASE("pruning examples") {
  const ParamVector pos{1, 2, 3, 4};
  CHECK(prune_outer_gradient(pos, 0.0, one_group(4)) == pos);

  const ParamVector mixed{3, -1, 2, -0.5};
  CHECK(prune_outer_gradient(mixed, 0.5, one_group(4)) == ParamVector{3, 0, 2, 0});

  const ParamVector zero(4);
  for (double p : {0.0, 0.25, 0.5, 0.75}) {
    CHECK(prune_outer_gradient(zero, p, one_group(4)) == zero);
  }
}

TEST_CASE("the magnitude-weighted vote picks the sign") {
  // Three small positives lose to one large negative.
  const ParamVector v{1, 1, 1, -5};
  CHECK(prune_outer_gradient(v, 0.0, one_group(4)) == ParamVector{0, 0, 0, -5});
  // Ties go to the positive sign.
  const ParamVector t{2, -2};
  CHECK(prune_outer_gradient(t, 0.0, one_group(2)) == ParamVector{2, 0});
}

TEST_CASE("magnitude cut zeroes the smallest survivors") {
  const ParamVector v{5, 1, 4, 2, 3};
  CHECK(prune_outer_gradient(v, 0.5, one_group(5)) == ParamVector{5, 0, 4, 0, 0});
  CHECK(prune_outer_gradient(v, 0.2, one_group(5)) == ParamVector{5, 0, 4, 2, 3});
}

TEST_CASE("bias elements belong to their neuron group") {
  const std::vector<NeuronGroup> groups = {NeuronGroup{0, 2, 4},
                                           NeuronGroup{2, 2, 5}};
  const ParamVector v{1, 2, -3, -4, -9, 0.5};
  // Group 0 = {1, 2, -9}: negative wins. Group 1 = {-3, -4, 0.5}: negative wins.
  CHECK(prune_outer_gradient(v, 0.0, groups) == ParamVector{0, 0, -3, -4, -9, 0});
}

TEST_CASE("invalid fractions are rejected") {
  const ParamVector v{1, 2};
  for (double p : {-0.1, 1.0, 1.5}) {
    try {
      prune_outer_gradient(v, p, one_group(2));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidArgument);
    }
  }
}

TEST_CASE("pruning invariants on model-shaped deltas") {
  const ModelConfig cfg = testing::small_model();
  const auto groups = neuron_groups(cfg);
  std::size_t covered = 0;
  for (const auto& g : groups) covered += g.size();
  REQUIRE(covered == cfg.param_count());

  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const ParamVector d = testing::random_vector(cfg.param_count(), seed, 0.01);
    for (double p : {0.0, 0.25, 0.5, 0.75}) {
      const ParamVector out = prune_outer_gradient(d, p, groups);
      for (std::size_t i = 0; i < d.size(); ++i) {
        // Support shrinks and survivors keep their exact value.
        REQUIRE((out[i] == 0.0 || out[i] == d[i]));
        if (d[i] == 0.0) REQUIRE(out[i] == 0.0);
      }
      for (const auto& g : groups) {
        REQUIRE(double(zeros_in(out, g)) >= std::ceil(p * double(g.size())));
      }
      CHECK(prune_outer_gradient(out, p, groups) == out);
    }
  }
}

}  // TEST_SUITE
