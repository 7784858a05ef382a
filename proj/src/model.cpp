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

#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"
#include "rng.hpp"

namespace diloco {

std::size_t ModelConfig::param_count() const {
  return vocab_size * embed_dim + context_len * embed_dim * hidden_dim +
         hidden_dim + hidden_dim * vocab_size + vocab_size;
}

void ModelConfig::validate() const {
  require(vocab_size >= 1 && context_len >= 1 && embed_dim >= 1 &&
              hidden_dim >= 1,
          ErrorCode::kConfig, "model dimensions must all be >= 1");
}

ModelLayout ModelLayout::of(const ModelConfig& cfg) {
  ModelLayout l;
  l.embed = 0;
  l.w1 = l.embed + cfg.vocab_size * cfg.embed_dim;
  l.b1 = l.w1 + cfg.hidden_dim * cfg.context_len * cfg.embed_dim;
  l.w2 = l.b1 + cfg.hidden_dim;
  l.b2 = l.w2 + cfg.vocab_size * cfg.hidden_dim;
  l.total = l.b2 + cfg.vocab_size;
  return l;
}

std::vector<NeuronGroup> neuron_groups(const ModelConfig& cfg) {
  const ModelLayout l = ModelLayout::of(cfg);
  const std::size_t in = cfg.context_len * cfg.embed_dim;
  std::vector<NeuronGroup> groups;
  groups.reserve(cfg.vocab_size * 2 + cfg.hidden_dim);
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
    groups.push_back({l.embed + v * cfg.embed_dim, cfg.embed_dim,
                      NeuronGroup::kNoBias});
  }
  for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
    groups.push_back({l.w1 + j * in, in, l.b1 + j});
  }
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
    groups.push_back({l.w2 + v * cfg.hidden_dim, cfg.hidden_dim, l.b2 + v});
  }
  return groups;
}

ParamVector init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const ModelLayout l = ModelLayout::of(cfg);
  ParamVector p(l.total);
  Rng rng(seed, StreamPurpose::kInit);
  for (std::size_t i = l.embed; i < l.w1; ++i) p[i] = rng.uniform(-1.0, 1.0);
  const double s =
      1.0 / std::sqrt(static_cast<double>(cfg.context_len * cfg.embed_dim));
  for (std::size_t i = l.w1; i < l.b1; ++i) p[i] = rng.uniform(-s, s);
  return p;
}

namespace {

void check_inputs(const ParamVector& params, const ModelConfig& cfg,
                  const Batch& batch) {
  if (params.size() != cfg.param_count()) {
    fail(ErrorCode::kDimension,
         "model: parameter vector has " + std::to_string(params.size()) +
             " elements, config expects " + std::to_string(cfg.param_count()));
  }
  require(batch.size() >= 1, ErrorCode::kInvalidArgument, "model: empty batch");
  require(batch.context_len == cfg.context_len &&
              batch.contexts.size() == batch.size() * cfg.context_len,
          ErrorCode::kDimension, "model: batch context length mismatch");
  auto in_vocab = [&](std::uint32_t t) { return t < cfg.vocab_size; };
  require(std::all_of(batch.contexts.begin(), batch.contexts.end(), in_vocab) &&
              std::all_of(batch.targets.begin(), batch.targets.end(), in_vocab),
          ErrorCode::kInvalidArgument, "model: token id out of vocabulary");
}

// Activations for one example, kept for the backward pass.
struct Scratch {
  std::vector<double> x;       // context_len * embed_dim
  std::vector<double> h;       // hidden_dim
  std::vector<double> logits;  // vocab_size

  explicit Scratch(const ModelConfig& cfg)
      : x(cfg.context_len * cfg.embed_dim),
        h(cfg.hidden_dim),
        logits(cfg.vocab_size) {}
};

// Fills s.x, s.h and s.logits (turned into probabilities) and returns the
// example's negative log-likelihood.
double forward_one(std::span<const double> p, const ModelConfig& cfg,
                   const ModelLayout& l, const std::uint32_t* ctx,
                   std::uint32_t target, Scratch& s) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t in = cfg.context_len * d;
  for (std::size_t c = 0; c < cfg.context_len; ++c) {
    const double* row = p.data() + l.embed + ctx[c] * d;
    std::copy(row, row + d, s.x.begin() + c * d);
  }
  for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
    const double* w = p.data() + l.w1 + j * in;
    double a = p[l.b1 + j];
    for (std::size_t i = 0; i < in; ++i) a += w[i] * s.x[i];
    s.h[j] = std::tanh(a);
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
    const double* w = p.data() + l.w2 + v * cfg.hidden_dim;
    double z = p[l.b2 + v];
    for (std::size_t j = 0; j < cfg.hidden_dim; ++j) z += w[j] * s.h[j];
    s.logits[v] = z;
    max_logit = std::max(max_logit, z);
  }
  double sum = 0.0;
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
    sum += std::exp(s.logits[v] - max_logit);
  }
  const double log_z = max_logit + std::log(sum);
  const double nll = log_z - s.logits[target];
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
    s.logits[v] = std::exp(s.logits[v] - log_z);
  }
  return nll;
}

}  // namespace

std::vector<double> example_nll(const ParamVector& params,
                                const ModelConfig& cfg, const Batch& batch) {
  check_inputs(params, cfg, batch);
  const ModelLayout l = ModelLayout::of(cfg);
  Scratch s(cfg);
  std::vector<double> out(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    out[b] = forward_one(params.view(), cfg, l,
                         batch.contexts.data() + b * cfg.context_len,
                         batch.targets[b], s);
  }
  return out;
}

double forward_loss(const ParamVector& params, const ModelConfig& cfg,
                    const Batch& batch) {
  const std::vector<double> nll = example_nll(params, cfg, batch);
  double sum = 0.0;
  for (double v : nll) sum += v;
  return sum / static_cast<double>(nll.size());
}

ParamVector backward(const ParamVector& params, const ModelConfig& cfg,
                     const Batch& batch) {
  return loss_and_grad(params, cfg, batch).grad;
}

LossAndGrad loss_and_grad(const ParamVector& params, const ModelConfig& cfg,
                          const Batch& batch) {
  check_inputs(params, cfg, batch);
  const ModelLayout l = ModelLayout::of(cfg);
  const std::size_t d = cfg.embed_dim;
  const std::size_t in = cfg.context_len * d;
  const std::size_t hid = cfg.hidden_dim;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  auto p = params.view();
  LossAndGrad out{0.0, ParamVector(params.size())};
  auto g = out.grad.mutable_view();
  Scratch s(cfg);
  std::vector<double> dh(hid);
  std::vector<double> dx(in);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::uint32_t* ctx = batch.contexts.data() + b * cfg.context_len;
    const std::uint32_t target = batch.targets[b];
    out.loss += forward_one(p, cfg, l, ctx, target, s);

    // dL/dlogits = (softmax - onehot) / B; s.logits now holds softmax.
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
      const double dz = (s.logits[v] - (v == target ? 1.0 : 0.0)) * inv_b;
      const double* w = p.data() + l.w2 + v * hid;
      double* gw = g.data() + l.w2 + v * hid;
      for (std::size_t j = 0; j < hid; ++j) {
        gw[j] += dz * s.h[j];
        dh[j] += dz * w[j];
      }
      g[l.b2 + v] += dz;
    }

    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t j = 0; j < hid; ++j) {
      const double da = dh[j] * (1.0 - s.h[j] * s.h[j]);
      const double* w = p.data() + l.w1 + j * in;
      double* gw = g.data() + l.w1 + j * in;
      for (std::size_t i = 0; i < in; ++i) {
        gw[i] += da * s.x[i];
        dx[i] += da * w[i];
      }
      g[l.b1 + j] += da;
    }

    for (std::size_t c = 0; c < cfg.context_len; ++c) {
      double* ge = g.data() + l.embed + ctx[c] * d;
      for (std::size_t k = 0; k < d; ++k) ge[k] += dx[c * d + k];
    }
  }
  out.loss *= inv_b;
  return out;
}

}  // namespace diloco
