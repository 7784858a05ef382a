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

#ifndef DILOCO_OPTIMIZERS_HPP_
#define DILOCO_OPTIMIZERS_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>

#include "numerics.hpp"

namespace diloco {

enum class InnerKind { kAdamW, kSgd };
enum class LrScheduleKind { kWarmupCosine, kConstant };

struct InnerHyper {
  InnerKind kind = InnerKind::kAdamW;
  LrScheduleKind schedule = LrScheduleKind::kWarmupCosine;
  double base_lr = 4e-4;
  std::size_t warmup_steps = 1000;
  std::size_t total_steps = 88000;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;

  void validate() const;
};

// Linear warmup 0 -> base_lr over warmup_steps, then cosine decay to 0 at
// total_steps. Steps past total_steps give 0.
double lr_schedule(std::size_t step, const InnerHyper& hyper);

struct AdamWState {
  ParamVector m;
  ParamVector v;
  std::size_t step = 0;

  static AdamWState zeros(std::size_t n) {
    return AdamWState{ParamVector(n), ParamVector(n), 0};
  }
};

// Bias-corrected Adam step with decoupled weight decay:
//   params -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * params)
void adamw_step(AdamWState& state, ParamVector& params, const ParamVector& grad,
                const InnerHyper& hyper, double lr);

// Per-worker inner optimizer. SGD exists for the equivalence checks against
// data-parallel training; AdamW is the default.
class InnerOptimizer {
 public:
  InnerOptimizer(const InnerHyper& hyper, std::size_t n);

  void step(ParamVector& params, const ParamVector& grad, double lr);

  const AdamWState& adam_state() const { return adam_; }
  const InnerHyper& hyper() const { return hyper_; }

 private:
  InnerHyper hyper_;
  AdamWState adam_;
};

enum class OuterKind { kSgd, kSgdm, kNesterov, kAdam };

std::string_view to_string(OuterKind kind);
OuterKind parse_outer_kind(std::string_view name);

struct OuterHyper {
  OuterKind kind = OuterKind::kNesterov;
  double lr = 0.7;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 0.1;

  // Tuned learning rate per optimizer: sgd 0.5, sgdm 0.3, nesterov 0.7,
  // adam 0.3.
  static double default_lr(OuterKind kind);
  void validate() const;
};

struct MomentumState {
  ParamVector velocity;
};

using OuterState = std::variant<std::monostate, MomentumState, AdamWState>;

OuterState make_outer_state(OuterKind kind, std::size_t n);

// Applies one outer update, treating delta as a gradient:
//   sgd:      theta -= lr * delta
//   sgdm:     v = mu*v + delta; theta -= lr * v
//   nesterov: v = mu*v + delta; theta -= lr * (delta + mu*v)
//   adam:     Adam with delta as the gradient, no weight decay
void outer_step(OuterState& state, ParamVector& theta, const ParamVector& delta,
                const OuterHyper& hyper);

}  // namespace diloco

#endif  // DILOCO_OPTIMIZERS_HPP_
