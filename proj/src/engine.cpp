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

#include "engine.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "compression.hpp"
#include "error.hpp"
#include "wire.hpp"

namespace diloco {

std::size_t RunConfig::k_at(std::uint32_t outer_step) const {
  if (replica_schedule.empty()) return k;
  std::size_t kt = replica_schedule.front().replicas;
  for (const auto& ph : replica_schedule) {
    if (ph.from_step <= outer_step) kt = ph.replicas;
  }
  return kt;
}

std::size_t RunConfig::max_k() const {
  if (replica_schedule.empty()) return k;
  std::size_t m = 0;
  for (const auto& ph : replica_schedule) m = std::max(m, ph.replicas);
  return m;
}

std::uint64_t RunConfig::total_inner_compute() const {
  std::uint64_t total = 0;
  for (std::uint32_t t = 1; t <= T; ++t) total += k_at(t) * H;
  return total;
}

void RunConfig::validate() const {
  model.validate();
  require(k >= 1, ErrorCode::kConfig, "k must be >= 1");
  require(H >= 1, ErrorCode::kConfig, "H must be >= 1");
  require(T >= 1, ErrorCode::kConfig, "T must be >= 1");
  require(T < wire::kRejectMarker, ErrorCode::kConfig, "T is too large");
  require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
  require(drop_prob >= 0.0 && drop_prob <= 1.0, ErrorCode::kConfig,
          "drop_prob must lie in [0, 1]");
  require(prune_frac >= 0.0 && prune_frac < 1.0, ErrorCode::kConfig,
          "prune_frac must lie in [0, 1)");
  require(val_frac > 0.0 && val_frac < 1.0, ErrorCode::kConfig,
          "val_frac must lie in (0, 1)");
  require(eval_batches >= 1, ErrorCode::kConfig, "eval_batches must be >= 1");
  require(threads >= 1, ErrorCode::kConfig, "threads must be >= 1");
  require(kmeans_iters >= 1, ErrorCode::kConfig, "kmeans_iters must be >= 1");
  require(!run_id.empty() &&
              run_id.find_first_of(",\n\r/\\") == std::string::npos,
          ErrorCode::kConfig,
          "run_id must be non-empty without commas, newlines or slashes");
  require(barrier_timeout_s >= 0.0 && initial_timeout_s > 0.0 &&
              connect_retry_s >= 0.0,
          ErrorCode::kConfig, "timeouts must be nonnegative");
  if (!replica_schedule.empty()) {
    require(replica_schedule.front().from_step == 1, ErrorCode::kConfig,
            "replica_schedule must start at outer step 1");
    for (std::size_t i = 0; i < replica_schedule.size(); ++i) {
      require(replica_schedule[i].replicas >= 1, ErrorCode::kConfig,
              "replica_schedule: replica counts must be >= 1");
      if (i > 0) {
        require(replica_schedule[i].from_step >
                    replica_schedule[i - 1].from_step,
                ErrorCode::kConfig,
                "replica_schedule: steps must be strictly increasing");
      }
    }
    require(transport == TransportKind::kSim, ErrorCode::kConfig,
            "replica_schedule is only supported with transport = sim");
  }
  pretrain_hyper(*this).validate();
  stage_hyper(*this).validate();
  outer.validate();
}

namespace {

InnerHyper with_total(const InnerHyper& base, std::size_t total) {
  InnerHyper h = base;
  h.total_steps = total;
  h.warmup_steps = std::min(h.warmup_steps, total);
  return h;
}

}  // namespace

InnerHyper pretrain_hyper(const RunConfig& cfg) {
  return with_total(cfg.inner, cfg.restart_warmup
                                   ? cfg.pretrain_steps
                                   : cfg.pretrain_steps + cfg.T * cfg.H);
}

InnerHyper stage_hyper(const RunConfig& cfg) {
  return with_total(cfg.inner, cfg.restart_warmup
                                   ? cfg.T * cfg.H
                                   : cfg.pretrain_steps + cfg.T * cfg.H);
}

std::size_t stage_step_base(const RunConfig& cfg) {
  return cfg.restart_warmup ? 0 : cfg.pretrain_steps;
}

Dataset prepare_dataset(const RunConfig& cfg) {
  require(!cfg.corpus_path.empty(), ErrorCode::kConfig,
          "corpus_path is required");
  return prepare_dataset(cfg, load_corpus(cfg.corpus_path));
}

Dataset prepare_dataset(const RunConfig& cfg, const Corpus& corpus) {
  Dataset d;
  auto split = split_validation(corpus, cfg.val_frac);
  d.train = std::move(split.train);
  d.validation = std::move(split.validation);
  d.shards = cfg.regime == DataRegime::kIid
                 ? shard_iid(d.train, cfg.max_k(), cfg.master_seed)
                 : shard_noniid(d.train, cfg.max_k(), cfg.master_seed,
                                cfg.kmeans_iters);
  d.eval = make_eval_set(d.validation, cfg.model, cfg.eval_batches,
                         cfg.batch_size, cfg.master_seed);
  return d;
}

ParamVector pretrain(const RunConfig& cfg, const Dataset& data,
                     const RowCallback& on_row) {
  ParamVector theta = init_params(cfg.model, cfg.master_seed);
  const InnerHyper hyper = pretrain_hyper(cfg);
  InnerOptimizer opt(hyper, theta.size());
  const ShardSampler sampler(data.train, full_shard(data.train),
                             cfg.model.context_len);
  Rng rng(cfg.master_seed, StreamPurpose::kPretrain);

  auto emit = [&](std::size_t step, std::optional<double> loss) {
    if (!on_row) return;
    MetricsRow row;
    row.run_id = cfg.run_id;
    row.outer_step = 0;
    row.inner_step = step;
    row.k_t = 1;
    row.val_ppl = evaluate_perplexity(theta, cfg.model, data.eval);
    row.train_loss = loss;
    on_row(row);
  };

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t s = 0; s < cfg.pretrain_steps; ++s) {
    const Batch batch = sampler.sample(cfg.batch_size, rng);
    const LossAndGrad lg = loss_and_grad(theta, cfg.model, batch);
    opt.step(theta, lg.grad, lr_schedule(s + 1, hyper));
    loss_sum += lg.loss;
    ++loss_count;
    const std::size_t done = s + 1;
    if (cfg.pretrain_eval_every > 0 && done % cfg.pretrain_eval_every == 0 &&
        done < cfg.pretrain_steps) {
      emit(done, loss_sum / static_cast<double>(loss_count));
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
  require(theta.all_finite(), ErrorCode::kNumeric,
          "pretraining diverged (non-finite parameters)");
  emit(cfg.pretrain_steps,
       loss_count > 0
           ? std::optional<double>(loss_sum / static_cast<double>(loss_count))
           : std::nullopt);
  return theta;
}

double inner_phase(WorkerState& w, const ParamVector& start,
                   const PhaseSpec& spec) {
  require(spec.H >= 1, ErrorCode::kInvalidArgument, "inner_phase: H must be >= 1");
  require(spec.model != nullptr && spec.sampler != nullptr,
          ErrorCode::kInternal, "inner_phase: incomplete phase spec");
  w.local_params = start;
  w.phase_start = start;
  Rng rng(spec.master_seed, StreamPurpose::kBatch, w.worker_id,
          spec.outer_step);
  double loss_sum = 0.0;
  for (std::size_t h = 0; h < spec.H; ++h) {
    const Batch batch = spec.sampler->sample(spec.batch_size, rng);
    const LossAndGrad lg = loss_and_grad(w.local_params, *spec.model, batch);
    w.inner_step += 1;
    w.inner_opt.step(w.local_params, lg.grad,
                     lr_schedule(w.inner_step, spec.hyper));
    loss_sum += lg.loss;
  }
  require(w.local_params.all_finite(), ErrorCode::kNumeric,
          "worker " + std::to_string(w.worker_id) +
              ": inner phase diverged (non-finite parameters)");
  return loss_sum / static_cast<double>(spec.H);
}

OuterGradient compute_outer_gradient(const WorkerState& w,
                                     std::uint32_t outer_step) {
  return OuterGradient{w.worker_id, outer_step,
                       subtract(w.phase_start, w.local_params), w.shard_tokens};
}

std::vector<bool> sample_drop_mask(std::size_t k, double p, Rng& rng) {
  require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidArgument,
          "drop probability must lie in [0, 1]");
  std::vector<bool> mask(k);
  for (std::size_t i = 0; i < k; ++i) mask[i] = rng.bernoulli(p);
  return mask;
}

std::optional<ParamVector> aggregate(std::span<const OuterGradient> grads,
                                     DataRegime regime,
                                     const std::vector<bool>& dropped) {
  require(grads.size() == dropped.size(), ErrorCode::kInvalidArgument,
          "aggregate: drop mask size differs from gradient count");
  std::vector<ParamVector> vs;
  std::vector<double> ws;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (dropped[i]) continue;
    vs.push_back(grads[i].delta);
    ws.push_back(regime == DataRegime::kIid
                     ? 1.0
                     : static_cast<double>(grads[i].shard_tokens));
  }
  if (vs.empty()) return std::nullopt;
  return weighted_mean(vs, ws);
}

OuterLoop::OuterLoop(const RunConfig& cfg, ParamVector theta0,
                     std::vector<std::size_t> shard_tokens, const EvalSet* eval)
    : cfg_(cfg),
      theta_(std::move(theta0)),
      outer_state_(make_outer_state(cfg.outer.kind, theta_.size())),
      shard_tokens_(std::move(shard_tokens)),
      groups_(neuron_groups(cfg.model)),
      eval_(eval) {
  require(theta_.size() == cfg.model.param_count(), ErrorCode::kDimension,
          "initial parameters do not match the model config");
  result_.comm.gathers.assign(cfg.max_k(), 0);
  result_.comm.broadcasts.assign(cfg.max_k(), 0);
  result_.total_inner_compute = cfg.total_inner_compute();
}

RoundPlan OuterLoop::plan_round(std::uint32_t outer_step) {
  RoundPlan plan;
  plan.outer_step = outer_step;
  plan.k_t = cfg_.k_at(outer_step);
  // Workers beyond the previous count start fresh from the global params;
  // removed workers lose their state.
  synced_.resize(plan.k_t, true);
  plan.send_params = synced_;
  return plan;
}

void OuterLoop::require_params(std::uint32_t worker_id) {
  if (worker_id < synced_.size()) synced_[worker_id] = true;
}

const MetricsRow& OuterLoop::finish_round(
    const RoundPlan& plan, std::vector<std::optional<OuterGradient>> received,
    const RoundTraffic& traffic, std::optional<double> train_loss) {
  const std::size_t k_t = plan.k_t;
  require(received.size() == k_t, ErrorCode::kInternal,
          "finish_round: gradient slots differ from k_t");
  Rng drop_rng(cfg_.master_seed, StreamPurpose::kDrop, plan.outer_step);
  const std::vector<bool> mask =
      sample_drop_mask(k_t, cfg_.drop_prob, drop_rng);

  std::vector<OuterGradient> arrived;
  std::vector<bool> arrived_dropped;
  std::vector<bool> dropped(k_t, true);
  for (std::size_t i = 0; i < k_t; ++i) {
    if (!received[i]) continue;
    OuterGradient g = std::move(*received[i]);
    require(g.delta.size() == theta_.size(), ErrorCode::kDimension,
            "outer gradient length does not match the model");
    g.shard_tokens = shard_tokens_.at(i);
    if (cfg_.prune_frac > 0.0 && !mask[i]) {
      g.delta = prune_outer_gradient(g.delta, cfg_.prune_frac, groups_);
    }
    dropped[i] = mask[i];
    arrived.push_back(std::move(g));
    arrived_dropped.push_back(mask[i]);
  }

  const std::optional<ParamVector> agg =
      aggregate(arrived, cfg_.regime, arrived_dropped);
  if (agg) {
    outer_step(outer_state_, theta_, *agg, cfg_.outer);
    require(theta_.all_finite(), ErrorCode::kNumeric,
            "outer step produced non-finite parameters");
  }

  std::vector<OuterGradient> survivors;
  for (std::size_t j = 0; j < arrived.size(); ++j) {
    if (!arrived_dropped[j]) survivors.push_back(std::move(arrived[j]));
  }
  const OuterGradStats stats =
      outer_grad_stats(survivors, agg ? &*agg : nullptr);

  std::uint64_t bytes = traffic.downlink_bytes;
  std::vector<std::uint32_t> dropped_ids;
  for (std::size_t i = 0; i < k_t; ++i) {
    synced_[i] = !dropped[i];
    if (dropped[i]) {
      dropped_ids.push_back(static_cast<std::uint32_t>(i));
    } else {
      result_.comm.gathers[i] += 1;
      if (i < traffic.uplink_bytes.size()) bytes += traffic.uplink_bytes[i];
    }
    if (i < traffic.got_params.size() && traffic.got_params[i]) {
      result_.comm.broadcasts[i] += 1;
    }
  }
  result_.comm.rounds += 1;
  result_.comm.bytes += bytes;

  MetricsRow row;
  row.run_id = cfg_.run_id;
  row.outer_step = plan.outer_step;
  row.inner_step = cfg_.pretrain_steps + plan.outer_step * cfg_.H;
  row.k_t = k_t;
  if (eval_ != nullptr) {
    row.val_ppl = evaluate_perplexity(theta_, cfg_.model, *eval_);
    result_.final_val_ppl = row.val_ppl;
  }
  row.train_loss = train_loss;
  row.mean_cos_sim = stats.mean_cos_sim;
  row.std_cos_sim = stats.std_cos_sim;
  row.mean_delta_norm = stats.mean_delta_norm;
  row.agg_delta_norm = stats.agg_delta_norm;
  row.dropped_count = dropped_ids.size();
  row.bytes_communicated = bytes;
  result_.dropped.push_back(std::move(dropped_ids));
  result_.rows.push_back(std::move(row));
  return result_.rows.back();
}

RunResult OuterLoop::take_result() {
  RunResult r = std::move(result_);
  r.final_params = theta_;
  result_ = RunResult{};
  return r;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` threads. The first exception
// is rethrown after all threads finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RunResult run_sim(const RunConfig& cfg, const Dataset& data,
                  const ParamVector& theta0, const SimOptions& opts) {
  cfg.validate();
  require(data.shards.size() >= cfg.max_k(), ErrorCode::kInternal,
          "dataset has fewer shards than workers");
  std::vector<std::size_t> tokens;
  std::vector<ShardSampler> samplers;
  for (const Shard& s : data.shards) {
    tokens.push_back(s.num_tokens);
    samplers.emplace_back(data.train, s, cfg.model.context_len);
  }
  OuterLoop loop(cfg, theta0, tokens, &data.eval);
  const InnerHyper hyper = stage_hyper(cfg);
  const std::size_t base = stage_step_base(cfg);
  std::vector<std::optional<WorkerState>> workers(cfg.max_k());

  for (std::uint32_t t = 1; t <= cfg.T; ++t) {
    const RoundPlan plan = loop.plan_round(t);
    for (std::size_t i = plan.k_t; i < workers.size(); ++i) workers[i].reset();
    for (std::size_t i = 0; i < plan.k_t; ++i) {
      if (!workers[i]) {
        workers[i].emplace(static_cast<std::uint32_t>(i), loop.params(), hyper,
                           base + (t - 1) * cfg.H, tokens[i]);
      }
    }

    const std::vector<std::uint8_t> params_frame =
        wire::encode_message({wire::MsgType::kParams, 0, t,
                              loop.params().values(), cfg.wire_f32});
    std::vector<std::optional<OuterGradient>> received(plan.k_t);
    std::vector<double> losses(plan.k_t);
    RoundTraffic traffic;
    traffic.uplink_bytes.assign(plan.k_t, 0);
    traffic.got_params.assign(plan.k_t, false);
    std::vector<std::uint64_t> down(plan.k_t, 0);

    parallel_for(plan.k_t, cfg.threads, [&](std::size_t i) {
      WorkerState& w = *workers[i];
      const auto id = static_cast<std::uint32_t>(i);
      wire::Message msg;
      if (plan.send_params[i]) {
        msg = wire::decode_message(params_frame);
        msg.worker_id = id;
        down[i] = params_frame.size();
      } else {
        msg = wire::decode_message(
            wire::encode_message({wire::MsgType::kAck, id, t, {}, false}));
        down[i] = wire::frame_size(0);
      }
      traffic.got_params[i] = msg.type == wire::MsgType::kParams;
      const ParamVector start = traffic.got_params[i]
                                    ? ParamVector(std::move(msg.payload))
                                    : w.local_params;
      PhaseSpec spec{&cfg.model, &samplers[i], hyper, cfg.H, cfg.batch_size,
                     cfg.master_seed, t};
      losses[i] = inner_phase(w, start, spec);
      const OuterGradient og = compute_outer_gradient(w, t);
      const auto up_frame = wire::encode_message(
          {wire::MsgType::kOuterGrad, id, t, og.delta.values(), cfg.wire_f32});
      wire::Message up = wire::decode_message(up_frame);
      traffic.uplink_bytes[i] = up_frame.size();
      received[i] = OuterGradient{id, t, ParamVector(std::move(up.payload)),
                                  tokens[i]};
    });

    for (std::uint64_t b : down) traffic.downlink_bytes += b;
    double loss = 0.0;
    for (double l : losses) loss += l;
    const MetricsRow& row = loop.finish_round(
        plan, std::move(received), traffic,
        loss / static_cast<double>(plan.k_t));
    if (opts.on_row) opts.on_row(row);
  }
  return loop.take_result();
}

}  // namespace diloco
