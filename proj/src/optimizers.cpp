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

#include "optimizers.hpp"

#include <cmath>
#include <numbers>

#include "error.hpp"

namespace diloco {
namespace {

void check_len(const ParamVector& a, const ParamVector& b, const char* op) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kDimension, std::string(op) + ": length mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  }
}

void adam_update(AdamWState& st, ParamVector& params, const ParamVector& grad,
                 double lr, double beta1, double beta2, double eps,
                 double weight_decay) {
  check_len(params, grad, "adam");
  check_len(params, st.m, "adam");
  st.step += 1;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  auto p = params.mutable_view();
  auto m = st.m.mutable_view();
  auto v = st.v.mutable_view();
  auto g = grad.view();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * p[i]);
  }
}

}  // namespace

void InnerHyper::validate() const {
  require(base_lr >= 0.0 && std::isfinite(base_lr), ErrorCode::kConfig,
          "inner_lr must be finite and >= 0");
  require(warmup_steps <= total_steps, ErrorCode::kConfig,
          "warmup_steps must not exceed the total inner steps");
  require(weight_decay >= 0.0, ErrorCode::kConfig, "weight_decay must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          ErrorCode::kConfig, "inner betas must lie in [0, 1)");
  require(eps > 0.0, ErrorCode::kConfig, "inner_eps must be > 0");
}

double lr_schedule(std::size_t step, const InnerHyper& hyper) {
  if (hyper.schedule == LrScheduleKind::kConstant) return hyper.base_lr;
  if (step > hyper.total_steps) return 0.0;
  if (step < hyper.warmup_steps) {
    return hyper.base_lr * static_cast<double>(step) /
           static_cast<double>(hyper.warmup_steps);
  }
  const std::size_t decay_len = hyper.total_steps - hyper.warmup_steps;
  if (decay_len == 0) return hyper.base_lr;
  const double progress = static_cast<double>(step - hyper.warmup_steps) /
                          static_cast<double>(decay_len);
  return hyper.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(AdamWState& state, ParamVector& params, const ParamVector& grad,
                const InnerHyper& hyper, double lr) {
  adam_update(state, params, grad, lr, hyper.beta1, hyper.beta2, hyper.eps,
              hyper.weight_decay);
}

InnerOptimizer::InnerOptimizer(const InnerHyper& hyper, std::size_t n)
    : hyper_(hyper) {
  if (hyper_.kind == InnerKind::kAdamW) adam_ = AdamWState::zeros(n);
}

void InnerOptimizer::step(ParamVector& params, const ParamVector& grad,
                          double lr) {
  if (hyper_.kind == InnerKind::kAdamW) {
    adamw_step(adam_, params, grad, hyper_, lr);
    return;
  }
  check_len(params, grad, "sgd");
  auto p = params.mutable_view();
  auto g = grad.view();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

std::string_view to_string(OuterKind kind) {
  switch (kind) {
    case OuterKind::kSgd:
      return "sgd";
    case OuterKind::kSgdm:
      return "sgdm";
    case OuterKind::kNesterov:
      return "nesterov";
    case OuterKind::kAdam:
      return "adam";
  }
  return "?";
}

OuterKind parse_outer_kind(std::string_view name) {
  if (name == "sgd") return OuterKind::kSgd;
  if (name == "sgdm") return OuterKind::kSgdm;
  if (name == "nesterov") return OuterKind::kNesterov;
  if (name == "adam") return OuterKind::kAdam;
  fail(ErrorCode::kConfig, "outer_opt: unknown optimizer '" +
                               std::string(name) +
                               "' (expected sgd, sgdm, nesterov, adam)");
}

double OuterHyper::default_lr(OuterKind kind) {
  switch (kind) {
    case OuterKind::kSgd:
      return 0.5;
    case OuterKind::kSgdm:
      return 0.3;
    case OuterKind::kNesterov:
      return 0.7;
    case OuterKind::kAdam:
      return 0.3;
  }
  return 0.7;
}

void OuterHyper::validate() const {
  require(lr > 0.0 && std::isfinite(lr), ErrorCode::kConfig,
          "outer_lr must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::kConfig,
          "outer_momentum must lie in [0, 1)");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 &&
              adam_beta2 < 1.0,
          ErrorCode::kConfig, "outer adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, ErrorCode::kConfig, "outer_adam_eps must be > 0");
}

OuterState make_outer_state(OuterKind kind, std::size_t n) {
  switch (kind) {
    case OuterKind::kSgd:
      return std::monostate{};
    case OuterKind::kSgdm:
    case OuterKind::kNesterov:
      return MomentumState{ParamVector(n)};
    case OuterKind::kAdam:
      return AdamWState::zeros(n);
  }
  return std::monostate{};
}

void outer_step(OuterState& state, ParamVector& theta, const ParamVector& delta,
                const OuterHyper& hyper) {
  check_len(theta, delta, "outer_step");
  auto th = theta.mutable_view();
  auto d = delta.view();
  switch (hyper.kind) {
    case OuterKind::kSgd:
      for (std::size_t i = 0; i < th.size(); ++i) th[i] -= hyper.lr * d[i];
      break;
    case OuterKind::kSgdm:
    case OuterKind::kNesterov: {
      auto* ms = std::get_if<MomentumState>(&state);
      require(ms != nullptr, ErrorCode::kInternal,
              "outer_step: momentum optimizer without velocity state");
      check_len(theta, ms->velocity, "outer_step");
      auto v = ms->velocity.mutable_view();
      const double mu = hyper.momentum;
      const bool nesterov = hyper.kind == OuterKind::kNesterov;
      for (std::size_t i = 0; i < th.size(); ++i) {
        v[i] = mu * v[i] + d[i];
        th[i] -= hyper.lr * (nesterov ? d[i] + mu * v[i] : v[i]);
      }
      break;
    }
    case OuterKind::kAdam: {
      auto* as = std::get_if<AdamWState>(&state);
      require(as != nullptr, ErrorCode::kInternal,
              "outer_step: adam optimizer without moment state");
      adam_update(*as, theta, delta, hyper.lr, hyper.adam_beta1,
                  hyper.adam_beta2, hyper.adam_eps, 0.0);
      break;
    }
  }
}

}  // namespace diloco
