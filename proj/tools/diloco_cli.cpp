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


#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "diloco/diloco.h"

namespace {

struct Common {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::vector<std::string> overrides;
  long long seed = -1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path,
                  "key = value config file or JSON run sidecar");
  cmd->add_option("--preset", c.preset, "start from a named preset");
  cmd->add_option("--seed", c.seed, "master seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out-dir", c.out_dir,
                  "output directory (default: $DILOCO_OUT_DIR or .)");
  cmd->add_option("--set,overrides", c.overrides, "key=value overrides");
  cmd->add_flag("-q,--quiet", c.quiet, "do not echo metrics rows");
}

int report(dlc_status st) {
  if (st != DLC_OK) {
    std::cerr << "diloco: " << dlc_status_name(st) << ": " << dlc_last_error()
              << "\n";
  }
  return static_cast<int>(st);
}

// Builds the config: preset, then file, then --seed, then overrides.
dlc_status build_config(const Common& c, dlc_config** out) {
  dlc_config* cfg = nullptr;
  dlc_status st =
      dlc_config_create(c.preset.empty() ? nullptr : c.preset.c_str(), &cfg);
  if (st != DLC_OK) return st;
  if (!c.config_path.empty()) st = dlc_config_load(cfg, c.config_path.c_str());
  if (st == DLC_OK && c.seed >= 0) {
    st = dlc_config_set(cfg, "seed", std::to_string(c.seed).c_str());
  }
  for (const auto& kv : c.overrides) {
    if (st != DLC_OK) break;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "diloco: override '" << kv << "' must be key=value\n";
      dlc_config_free(cfg);
      return DLC_ERR_CONFIG;
    }
    st = dlc_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
  }
  if (st == DLC_OK) st = dlc_config_validate(cfg);
  if (st != DLC_OK) {
    dlc_config_free(cfg);
    return st;
  }
  *out = cfg;
  return DLC_OK;
}

std::string out_dir_of(const Common& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("DILOCO_OUT_DIR"); env && *env) return env;
  return ".";
}

void print_row(const char* line, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::printf("%s\n", line);
  std::fflush(stdout);
}

void print_log(const char* line, void*) {
  std::fprintf(stderr, "[diloco] %s\n", line);
}

void print_run(const dlc_run* run) {
  const double ppl = dlc_run_final_ppl(run);
  std::fprintf(stderr,
               "final val_ppl %s, outer rounds %llu, bytes %llu, inner steps "
               "%llu\nmetrics: %s\n",
               std::isnan(ppl) ? "n/a" : std::to_string(ppl).c_str(),
               static_cast<unsigned long long>(dlc_run_rounds(run)),
               static_cast<unsigned long long>(dlc_run_bytes(run)),
               static_cast<unsigned long long>(dlc_run_total_inner_compute(run)),
               dlc_run_csv_path(run));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed low-communication training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dlc_version());

  Common train_opts;
  auto* train = app.add_subcommand("train", "pretrain and run the outer loop");
  add_common(train, train_opts);

  Common sweep_opts;
  std::string axis;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "one run per value of an axis");
  add_common(sweep, sweep_opts);
  sweep->add_option("--axis", axis,
                    "H, k, drop_prob, prune_frac, pretrain_steps, outer_opt "
                    "or data_regime")
      ->required();
  sweep->add_option("--values", values, "comma-separated values")->required();

  Common coord_opts;
  std::string bind = "0.0.0.0:7070";
  auto* coord = app.add_subcommand("coordinator", "serve a TCP run");
  add_common(coord, coord_opts);
  coord->add_option("--bind", bind, "host:port to listen on")
      ->capture_default_str();

  Common worker_opts;
  std::string connect;
  std::uint32_t worker_id = 0;
  auto* worker = app.add_subcommand("worker", "join a TCP run");
  add_common(worker, worker_opts);
  worker->add_option("--connect", connect, "coordinator host:port")->required();
  worker->add_option("--worker-id", worker_id, "worker id in [0, k)")->required();

  Common eval_opts;
  std::string params;
  auto* eval = app.add_subcommand("eval", "validation perplexity of a checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("--params", params, "checkpoint written by a run")->required();

  auto* presets = app.add_subcommand("presets", "list preset names");

  CLI11_PARSE(app, argc, argv);

  if (presets->parsed()) {
    char buf[1024];
    const dlc_status st = dlc_preset_names(buf, sizeof(buf), nullptr);
    if (st != DLC_OK) return report(st);
    std::printf("%s\n", buf);
    return 0;
  }

  Common* common = train->parsed()   ? &train_opts
                   : sweep->parsed() ? &sweep_opts
                   : coord->parsed() ? &coord_opts
                   : worker->parsed() ? &worker_opts
                                      : &eval_opts;
  dlc_config* cfg = nullptr;
  dlc_status st = build_config(*common, &cfg);
  if (st != DLC_OK) return report(st);
  bool quiet = common->quiet;

  if (train->parsed() || coord->parsed()) {
    if (!quiet) std::printf("%s\n", dlc_csv_header());
    dlc_run* run = nullptr;
    if (train->parsed()) {
      st = dlc_train(cfg, out_dir_of(*common).c_str(), print_row, &quiet, &run);
    } else {
      st = dlc_coordinator_serve(cfg, bind.c_str(), out_dir_of(*common).c_str(),
                                 print_row, print_log, &quiet, &run);
    }
    if (st == DLC_OK) print_run(run);
    dlc_run_free(run);
  } else if (sweep->parsed()) {
    char summary[4096];
    st = dlc_sweep(cfg, axis.c_str(), values.c_str(),
                   out_dir_of(*common).c_str(), print_row, &quiet, summary,
                   sizeof(summary));
    if (st == DLC_OK) std::fprintf(stderr, "summary: %s\n", summary);
  } else if (worker->parsed()) {
    st = dlc_worker_run(cfg, connect.c_str(), worker_id, print_log, nullptr);
  } else {
    double ppl = 0.0;
    st = dlc_evaluate(cfg, params.c_str(), &ppl);
    if (st == DLC_OK) std::printf("val_ppl %.17g\n", ppl);
  }
  dlc_config_free(cfg);
  return report(st);
}
