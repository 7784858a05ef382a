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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "data.hpp"
#include "error.hpp"
#include "model.hpp"
#include "optimizers.hpp"
#include "test_util.hpp"

using namespace diloco;

namespace {

Batch random_batch(const ModelConfig& cfg, std::size_t B, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.context_len = cfg.context_len;
  for (std::size_t i = 0; i < B * cfg.context_len; ++i) {
    b.contexts.push_back(static_cast<std::uint32_t>(rng.below(cfg.vocab_size)));
  }
  for (std::size_t i = 0; i < B; ++i) {
    b.targets.push_back(static_cast<std::uint32_t>(rng.below(cfg.vocab_size)));
  }
  return b;
}

// init_params with the zero-initialized tensors filled with small noise, so
// every gradient path is active.
ParamVector trained_looking(const ModelConfig& cfg, std::uint64_t seed) {
  ParamVector p = init_params(cfg, seed);
  const ModelLayout L = ModelLayout::of(cfg);
  Rng rng(seed + 1);
  for (std::size_t i = L.b1; i < L.w2; ++i) p[i] = rng.uniform(-0.1, 0.1);
  for (std::size_t i = L.w2; i < L.total; ++i) p[i] = rng.uniform(-0.3, 0.3);
  return p;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("parameter count matches the layout formula") {
  const ModelConfig cfg;
  const std::size_t V = 256, C = 16, D = 32, H = 128;
  CHECK(cfg.param_count() == V * D + C * D * H + H + H * V + V);
  CHECK(ModelLayout::of(cfg).total == cfg.param_count());
  CHECK(init_params(cfg).size() == cfg.param_count());
}

TEST_CASE("invalid configs are rejected") {
  ModelConfig cfg;
  cfg.hidden_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("init is deterministic and seeded") {
  const ModelConfig cfg = testing::small_model();
  CHECK(init_params(cfg, 5) == init_params(cfg, 5));
  CHECK_FALSE(init_params(cfg, 5) == init_params(cfg, 6));
}

TEST_CASE("init zeroes the output layer and biases and scales the rest") {
  const ModelConfig cfg;
  const ParamVector p = init_params(cfg, 11);
  const ModelLayout L = ModelLayout::of(cfg);
  for (std::size_t i = L.b1; i < L.w2; ++i) REQUIRE(p[i] == 0.0);
  for (std::size_t i = L.w2; i < L.total; ++i) REQUIRE(p[i] == 0.0);
  const double w1_bound = 1.0 / std::sqrt(double(cfg.context_len * cfg.embed_dim));
  double w1_max = 0.0, e_max = 0.0;
  for (std::size_t i = L.w1; i < L.b1; ++i) w1_max = std::max(w1_max, std::abs(p[i]));
  for (std::size_t i = L.embed; i < L.w1; ++i) e_max = std::max(e_max, std::abs(p[i]));
  CHECK(w1_max <= w1_bound);
  CHECK(w1_max > 0.9 * w1_bound);
  CHECK(e_max <= 1.0);
  CHECK(e_max > 0.9);
}

TEST_CASE("fresh model has loss ln(vocab)") {
  const ModelConfig cfg;
  const Batch b = random_batch(cfg, 16, 3);
  CHECK(forward_loss(init_params(cfg, 1), cfg, b) ==
        doctest::Approx(std::log(256.0)).epsilon(1e-14));
}

TEST_CASE("two-symbol vocabulary with symmetric logits gives ln 2") {
  ModelConfig cfg;
  cfg.vocab_size = 2;
  cfg.context_len = 2;
  cfg.embed_dim = 3;
  cfg.hidden_dim = 4;
  ParamVector p = init_params(cfg, 2);
  const ModelLayout L = ModelLayout::of(cfg);
  // Equal output rows and biases force equal logits.
  for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
    p[L.w2 + j] = 0.3 * double(j);
    p[L.w2 + cfg.hidden_dim + j] = 0.3 * double(j);
  }
  p[L.b2] = p[L.b2 + 1] = 0.7;
  const Batch b = random_batch(cfg, 10, 4);
  CHECK(forward_loss(p, cfg, b) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("forward loss matches an independent implementation") {
  const ModelConfig cfg = testing::small_model();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ParamVector p = trained_looking(cfg, seed);
    const Batch b = random_batch(cfg, 13, seed + 50);
    const auto oracle = testing::oracle_nll(p, cfg, b);
    const auto got = example_nll(p, cfg, b);
    REQUIRE(got.size() == oracle.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i] - oracle[i]) < 1e-12);
      mean += oracle[i];
    }
    mean /= double(got.size());
    CHECK(std::abs(forward_loss(p, cfg, b) - mean) < 1e-12);
  }
}

TEST_CASE("dimension mismatch is rejected") {
  const ModelConfig cfg = testing::small_model();
  const Batch b = random_batch(cfg, 2, 1);
  try {
    forward_loss(ParamVector(3), cfg, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimension);
  }
  CHECK_THROWS_AS(backward(ParamVector(3), cfg, b), Error);
  Batch bad = b;
  bad.targets[0] = 999;
  CHECK_THROWS_AS(forward_loss(init_params(cfg), cfg, bad), Error);
}

TEST_CASE("backward matches central finite differences") {
  const ModelConfig cfg = testing::small_model();
  const ParamVector p = trained_looking(cfg, 9);
  const Batch b = random_batch(cfg, 12, 10);
  const ParamVector g = backward(p, cfg, b);
  REQUIRE(g.size() == p.size());
  Rng rng(77);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t i = rng.below(p.size());
    const double fd = testing::oracle_fd(p, cfg, b, i, 1e-5);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("duplicating every batch row leaves the gradient unchanged") {
  const ModelConfig cfg = testing::small_model();
  const ParamVector p = trained_looking(cfg, 4);
  const Batch b = random_batch(cfg, 7, 8);
  Batch twice = b;
  twice.contexts.insert(twice.contexts.end(), b.contexts.begin(), b.contexts.end());
  twice.targets.insert(twice.targets.end(), b.targets.begin(), b.targets.end());
  CHECK(max_abs_diff(backward(p, cfg, b), backward(p, cfg, twice)) < 1e-15);
  CHECK(std::abs(forward_loss(p, cfg, b) - forward_loss(p, cfg, twice)) < 1e-14);
}

TEST_CASE("unused embedding rows get exactly zero gradient") {
  const ModelConfig cfg = testing::small_model();
  const ParamVector p = trained_looking(cfg, 5);
  Batch b;
  b.context_len = cfg.context_len;
  b.contexts = {1, 2, 3, 4, 4, 3, 2, 1};
  b.targets = {5, 6};
  const ParamVector g = backward(p, cfg, b);
  for (std::size_t tok = 0; tok < cfg.vocab_size; ++tok) {
    if (tok >= 1 && tok <= 4) continue;
    for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
      REQUIRE(g[tok * cfg.embed_dim + d] == 0.0);
    }
  }
}

TEST_CASE("loss is invariant to row permutation") {
  const ModelConfig cfg = testing::small_model();
  const ParamVector p = trained_looking(cfg, 6);
  const Batch b = random_batch(cfg, 9, 12);
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[4]);
  Batch q;
  q.context_len = b.context_len;
  for (std::size_t i : perm) {
    for (std::size_t c = 0; c < cfg.context_len; ++c) {
      q.contexts.push_back(b.contexts[i * cfg.context_len + c]);
    }
    q.targets.push_back(b.targets[i]);
  }
  CHECK(std::abs(forward_loss(p, cfg, b) - forward_loss(p, cfg, q)) < 1e-14);
}

TEST_CASE("loss_and_grad agrees with forward_loss and backward") {
  const ModelConfig cfg = testing::small_model();
  const ParamVector p = trained_looking(cfg, 7);
  const Batch b = random_batch(cfg, 5, 2);
  const LossAndGrad lg = loss_and_grad(p, cfg, b);
  CHECK(lg.loss == forward_loss(p, cfg, b));
  CHECK(lg.grad == backward(p, cfg, b));
}

TEST_CASE("plain SGD descends on a tiny corpus") {
  const ModelConfig cfg = testing::small_model();
  const Corpus corpus = testing::synthetic_corpus(12, 3);
  const ShardSampler sampler(corpus, full_shard(corpus), cfg.context_len);
  Rng rng(1);
  const Batch probe = sampler.sample(256, rng);
  ParamVector p = init_params(cfg, 3);
  const double before = forward_loss(p, cfg, probe);
  for (int s = 0; s < 200; ++s) {
    const Batch b = sampler.sample(16, rng);
    axpy_inplace(p, -0.5, backward(p, cfg, b));
  }
  const double after = forward_loss(p, cfg, probe);
  CHECK(after < before - 1.0);
}

}  // TEST_SUITE
