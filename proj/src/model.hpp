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

#ifndef DILOCO_MODEL_HPP_
#define DILOCO_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "numerics.hpp"

namespace diloco {

// Byte-level next-token model:
//   x = concat(E[t_1], ..., E[t_C])
//   h = tanh(W1 x + b1)
//   logits = W2 h + b2
struct ModelConfig {
  std::size_t vocab_size = 256;
  std::size_t context_len = 16;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 128;
  std::uint64_t seed = 0;

  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Offsets of each tensor inside the flat parameter vector. Matrices are
// row-major with one row per output unit, so a neuron's incoming weights are
// contiguous.
struct ModelLayout {
  std::size_t embed = 0;   // vocab x embed_dim
  std::size_t w1 = 0;      // hidden x (context_len * embed_dim)
  std::size_t b1 = 0;      // hidden
  std::size_t w2 = 0;      // vocab x hidden
  std::size_t b2 = 0;      // vocab
  std::size_t total = 0;

  static ModelLayout of(const ModelConfig& cfg);
};

// A neuron: a contiguous weight row plus an optional bias element.
struct NeuronGroup {
  static constexpr std::size_t kNoBias = std::numeric_limits<std::size_t>::max();
  std::size_t row_begin = 0;
  std::size_t row_len = 0;
  std::size_t bias = kNoBias;

  std::size_t size() const { return row_len + (bias == kNoBias ? 0 : 1); }
};

// Embedding rows, hidden units (W1 row + b1), output units (W2 row + b2).
// Together the groups cover every parameter exactly once.
std::vector<NeuronGroup> neuron_groups(const ModelConfig& cfg);

struct Batch {
  std::size_t context_len = 0;
  std::vector<std::uint32_t> contexts;  // size() * context_len, row-major
  std::vector<std::uint32_t> targets;

  std::size_t size() const { return targets.size(); }
};

// Embedding and hidden weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with
// fan_in 1 for the one-hot embedding lookup; output layer and biases zero.
ParamVector init_params(const ModelConfig& cfg, std::uint64_t seed);
inline ParamVector init_params(const ModelConfig& cfg) {
  return init_params(cfg, cfg.seed);
}

// Per-row negative log-likelihood (natural log).
std::vector<double> example_nll(const ParamVector& params,
                                const ModelConfig& cfg, const Batch& batch);

// Mean cross-entropy over the batch.
double forward_loss(const ParamVector& params, const ModelConfig& cfg,
                    const Batch& batch);

// Gradient of forward_loss.
ParamVector backward(const ParamVector& params, const ModelConfig& cfg,
                     const Batch& batch);

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

// One forward pass shared by the loss and the gradient.
LossAndGrad loss_and_grad(const ParamVector& params, const ModelConfig& cfg,
                          const Batch& batch);

}  // namespace diloco

#endif  // DILOCO_MODEL_HPP_
