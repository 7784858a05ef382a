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


#ifndef DILOCO_EXPERIMENT_HPP_
#define DILOCO_EXPERIMENT_HPP_

#include <string>
#include <vector>

#include "config.hpp"
#include "engine.hpp"

namespace diloco {

struct RunOutputs {
  RunResult result;
  std::vector<MetricsRow> pretrain_rows;
  std::string csv_path;
  std::string sidecar_path;
  std::string config_path;
  std::string params_path;
};

struct ExperimentOptions {
  std::string out_dir = ".";
  RowCallback on_row;  // every logged row, pretraining included
};

// Pretraining plus the outer loop (sim, or a loopback TCP cluster when
// cfg.transport is tcp). Writes <run_id>.csv, <run_id>.json (resolved config
// and seeds), <run_id>.cfg and <run_id>.params into out_dir.
RunOutputs run_experiment(const RunConfig& cfg, const ExperimentOptions& opts);
RunOutputs run_experiment(const RunConfig& cfg, const Dataset& data,
                          const ExperimentOptions& opts);

// Writes the sidecar for a run driven elsewhere (the TCP coordinator role).
void write_run_files(const RunConfig& cfg, const RunResult& result,
                     const std::string& out_dir, RunOutputs& paths);

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {
      "H", "k", "drop_prob", "prune_frac", "pretrain_steps", "outer_opt",
      "data_regime"};
  return axes;
}

struct SweepEntry {
  std::string value;
  std::string run_id;
  std::optional<double> final_val_ppl;
  std::uint64_t total_inner_compute = 0;
  std::uint64_t bytes_communicated = 0;
  std::string csv_path;
};

struct SweepOutputs {
  std::vector<SweepEntry> entries;
  std::string summary_path;
};

// One run per value with the shared master seed; run ids are
// <run_id>_<axis>_<value>. The summary CSV is <run_id>_sweep_<axis>.csv.
SweepOutputs run_sweep(const ConfigMap& base, const std::string& axis,
                       const std::vector<std::string>& values,
                       const ExperimentOptions& opts);

// Checkpoint format: "DLCP", u32 version, u64 config hash, u64 count,
// count f64 values, crc32 over everything before it; little-endian.
void save_params(const std::string& path, const ParamVector& params,
                 std::uint64_t config_hash);
ParamVector load_params(const std::string& path,
                        std::uint64_t* config_hash = nullptr);

// Validation perplexity of a checkpoint under cfg's data and eval set.
double evaluate_checkpoint(const RunConfig& cfg, const std::string& params_path);

}  // namespace diloco

#endif  // DILOCO_EXPERIMENT_HPP_
