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

#ifndef DILOCO_ENGINE_HPP_
#define DILOCO_ENGINE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "optimizers.hpp"
#include "outer_gradient.hpp"

namespace diloco {

enum class DataRegime { kIid, kNonIid };
enum class TransportKind { kSim, kTcp };

// From outer step `from_step` (1-based) on, k_t = `replicas`.
struct ReplicaPhase {
  std::uint32_t from_step = 1;
  std::size_t replicas = 1;

  friend bool operator==(const ReplicaPhase&, const ReplicaPhase&) = default;
};

struct RunConfig {
  std::string run_id = "run";
  std::string corpus_path;
  double val_frac = 0.1;

  ModelConfig model;
  std::size_t batch_size = 32;

  std::size_t k = 4;
  std::size_t H = 50;
  std::size_t T = 40;
  std::size_t pretrain_steps = 500;
  DataRegime regime = DataRegime::kNonIid;
  double drop_prob = 0.0;
  double prune_frac = 0.0;
  std::vector<ReplicaPhase> replica_schedule;  // empty: k every step

  // total_steps is derived per stage; see stage_hyper().
  InnerHyper inner;
  bool restart_warmup = true;
  OuterHyper outer;

  std::uint64_t master_seed = 0;
  TransportKind transport = TransportKind::kSim;
  std::size_t threads = 1;

  std::size_t eval_batches = 50;
  std::size_t pretrain_eval_every = 0;
  std::size_t kmeans_iters = 50;

  // tcp only
  double barrier_timeout_s = 0.0;  // 0: 10x median phase time
  double initial_timeout_s = 300.0;
  double connect_retry_s = 10.0;
  bool wire_f32 = false;

  std::size_t k_at(std::uint32_t outer_step) const;
  std::size_t max_k() const;
  // Sum over outer steps of k_t * H.
  std::uint64_t total_inner_compute() const;
  void validate() const;
};

// Inner hyperparameters with total_steps resolved for pretraining or for the
// distributed stage.
InnerHyper pretrain_hyper(const RunConfig& cfg);
InnerHyper stage_hyper(const RunConfig& cfg);
// Schedule position of a worker's first inner step in the distributed stage.
std::size_t stage_step_base(const RunConfig& cfg);

struct Dataset {
  Corpus train;
  Corpus validation;
  std::vector<Shard> shards;  // one per worker id < max_k
  EvalSet eval;
};

// Loads the corpus, splits off validation, shards the training documents
// by regime and draws the fixed evaluation positions.
Dataset prepare_dataset(const RunConfig& cfg);
Dataset prepare_dataset(const RunConfig& cfg, const Corpus& corpus);

using RowCallback = std::function<void(const MetricsRow&)>;

// Single-worker AdamW on the full training set. Returns init_params
// unchanged for pretrain_steps == 0. Emits one row per pretrain_eval_every
// steps plus a final row at outer_step 0.
ParamVector pretrain(const RunConfig& cfg, const Dataset& data,
                     const RowCallback& on_row = {});

struct WorkerState {
  std::uint32_t worker_id = 0;
  ParamVector local_params;
  InnerOptimizer inner_opt;
  ParamVector phase_start;
  std::size_t inner_step = 0;  // lr_schedule position
  std::size_t shard_tokens = 0;

  WorkerState(std::uint32_t id, const ParamVector& params,
              const InnerHyper& hyper, std::size_t step, std::size_t tokens)
      : worker_id(id),
        local_params(params),
        inner_opt(hyper, params.size()),
        phase_start(params),
        inner_step(step),
        shard_tokens(tokens) {}
};

struct PhaseSpec {
  const ModelConfig* model = nullptr;
  const ShardSampler* sampler = nullptr;
  InnerHyper hyper;
  std::size_t H = 1;
  std::size_t batch_size = 32;
  std::uint64_t master_seed = 0;
  std::uint32_t outer_step = 1;
};

// Sets local_params and phase_start to `start`, then runs H inner steps on
// batches from the worker's (worker_id, outer_step) stream. Returns the mean
// training loss of the phase.
double inner_phase(WorkerState& w, const ParamVector& start,
                   const PhaseSpec& spec);

// phase_start - local_params.
OuterGradient compute_outer_gradient(const WorkerState& w,
                                     std::uint32_t outer_step);

// Each worker independently dropped with probability p.
std::vector<bool> sample_drop_mask(std::size_t k, double p, Rng& rng);

// Weighted mean of the non-dropped outer gradients: weight 1 (iid) or
// shard_tokens (non-iid), normalized over survivors. nullopt when every
// gradient is dropped.
std::optional<ParamVector> aggregate(std::span<const OuterGradient> grads,
                                     DataRegime regime,
                                     const std::vector<bool>& dropped);

struct CommStats {
  std::vector<std::uint64_t> gathers;     // accepted uploads per worker id
  std::vector<std::uint64_t> broadcasts;  // PARAMS received per worker id
  std::uint64_t rounds = 0;
  std::uint64_t bytes = 0;
};

struct RunResult {
  ParamVector final_params;
  std::vector<MetricsRow> rows;
  CommStats comm;
  std::vector<std::vector<std::uint32_t>> dropped;  // per outer step
  std::optional<double> final_val_ppl;
  std::uint64_t total_inner_compute = 0;
};

// What the coordinator tells each active worker at the start of a round.
struct RoundPlan {
  std::uint32_t outer_step = 0;
  std::size_t k_t = 0;
  std::vector<bool> send_params;  // false: continue from own parameters
};

struct RoundTraffic {
  std::uint64_t downlink_bytes = 0;
  std::vector<std::uint64_t> uplink_bytes;  // per worker, 0 if none arrived
  std::vector<bool> got_params;             // per worker
};

// Coordinator-side state shared by every transport: global parameters,
// outer optimizer, drop sampling, aggregation, statistics and metric rows.
class OuterLoop {
 public:
  OuterLoop(const RunConfig& cfg, ParamVector theta0,
            std::vector<std::size_t> shard_tokens, const EvalSet* eval);

  const ParamVector& params() const { return theta_; }
  const RunResult& result() const { return result_; }
  RunResult take_result();

  RoundPlan plan_round(std::uint32_t outer_step);

  // `received[i]` is worker i's outer gradient if it arrived in time;
  // `train_loss` is the mean phase loss over reporting workers, if known.
  const MetricsRow& finish_round(
      const RoundPlan& plan, std::vector<std::optional<OuterGradient>> received,
      const RoundTraffic& traffic, std::optional<double> train_loss);

  // Worker i receives parameters next round (used when it rejoins).
  void require_params(std::uint32_t worker_id);

 private:
  RunConfig cfg_;
  ParamVector theta_;
  OuterState outer_state_;
  std::vector<std::size_t> shard_tokens_;
  std::vector<NeuronGroup> groups_;
  const EvalSet* eval_;
  std::vector<bool> synced_;  // receives PARAMS next round
  RunResult result_;
};

struct SimOptions {
  RowCallback on_row;
};

// Runs the T outer steps in-process. Every exchange is encoded and decoded
// with the wire codec, so payloads and byte counts match the TCP transport.
RunResult run_sim(const RunConfig& cfg, const Dataset& data,
                  const ParamVector& theta0, const SimOptions& opts = {});

}  // namespace diloco

#endif  // DILOCO_ENGINE_HPP_
