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


#include "diloco/diloco.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <limits>
#include <sstream>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "transport.hpp"

struct dlc_config {
  diloco::ConfigMap map;
};

struct dlc_run {
  diloco::RunResult result;
  std::vector<std::string> rows;
  std::string csv_path;
};

namespace {

thread_local std::string g_last_error;

dlc_status to_status(diloco::ErrorCode code) {
  return static_cast<dlc_status>(static_cast<int>(code));
}

template <typename Fn>
dlc_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return DLC_OK;
  } catch (const diloco::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DLC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DLC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DLC_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  diloco::require(p != nullptr, diloco::ErrorCode::kInvalidArgument,
                  std::string(name) + " must not be NULL");
}

void copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = s.size() + 1;
  if (buf == nullptr && cap == 0) return;
  diloco::require(buf != nullptr && cap > s.size(),
                  diloco::ErrorCode::kInvalidArgument,
                  "buffer too small: need " + std::to_string(s.size() + 1) +
                      " bytes");
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

diloco::RowCallback row_forwarder(dlc_row_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const diloco::MetricsRow& row) {
    fn(diloco::to_csv_line(row).c_str(), user);
  };
}

std::function<void(const std::string&)> log_forwarder(dlc_log_fn fn,
                                                      void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

dlc_run* make_run(diloco::RunResult result,
                  const std::vector<diloco::MetricsRow>& pretrain_rows,
                  std::string csv_path) {
  auto* run = new dlc_run;
  for (const auto& r : pretrain_rows) run->rows.push_back(diloco::to_csv_line(r));
  for (const auto& r : result.rows) run->rows.push_back(diloco::to_csv_line(r));
  run->result = std::move(result);
  run->csv_path = std::move(csv_path);
  return run;
}

}  // namespace

extern "C" {

const char* dlc_version(void) { return "1.0.0"; }

const char* dlc_last_error(void) { return g_last_error.c_str(); }

const char* dlc_status_name(dlc_status status) {
  switch (status) {
    case DLC_OK: return "ok";
    case DLC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DLC_ERR_CONFIG: return "config error";
    case DLC_ERR_IO: return "i/o error";
    case DLC_ERR_DIMENSION: return "dimension mismatch";
    case DLC_ERR_PROTOCOL: return "protocol error";
    case DLC_ERR_NETWORK: return "network error";
    case DLC_ERR_NUMERIC: return "numeric error";
    case DLC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* dlc_csv_header(void) { return diloco::kCsvHeader; }

dlc_status dlc_config_create(const char* preset, dlc_config** out) {
  return guarded([&] {
    require_arg(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<dlc_config>();
    if (preset != nullptr) cfg->map = diloco::ConfigMap::preset(preset);
    *out = cfg.release();
  });
}

void dlc_config_free(dlc_config* cfg) { delete cfg; }

dlc_status dlc_config_load(dlc_config* cfg, const char* path) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(path, "path");
    diloco::ConfigMap copy = cfg->map;
    copy.merge_file(path);
    cfg->map = std::move(copy);
  });
}

dlc_status dlc_config_set(dlc_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(key, "key");
    require_arg(value, "value");
    cfg->map.set(key, value);
  });
}

dlc_status dlc_config_get(const dlc_config* cfg, const char* key, char* buf,
                          size_t cap, size_t* needed) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(key, "key");
    copy_out(cfg->map.get(key), buf, cap, needed);
  });
}

dlc_status dlc_config_validate(const dlc_config* cfg) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    cfg->map.resolve();
  });
}

dlc_status dlc_config_to_text(const dlc_config* cfg, char* buf, size_t cap,
                              size_t* needed) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    const auto resolved = diloco::ConfigMap::from_run_config(cfg->map.resolve());
    copy_out(resolved.to_text(), buf, cap, needed);
  });
}

dlc_status dlc_config_hash(const dlc_config* cfg, uint64_t* out) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(out, "out");
    *out = diloco::config_hash(cfg->map.resolve());
  });
}

dlc_status dlc_preset_names(char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    std::string joined;
    for (const auto& n : diloco::preset_names()) {
      if (!joined.empty()) joined += ',';
      joined += n;
    }
    copy_out(joined, buf, cap, needed);
  });
}

dlc_status dlc_train(const dlc_config* cfg, const char* out_dir,
                     dlc_row_fn on_row, void* user, dlc_run** out) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    if (out != nullptr) *out = nullptr;
    const diloco::RunConfig rc = cfg->map.resolve();
    diloco::ExperimentOptions opts;
    opts.out_dir = out_dir != nullptr ? out_dir : ".";
    opts.on_row = row_forwarder(on_row, user);
    diloco::RunOutputs r = diloco::run_experiment(rc, opts);
    if (out != nullptr) {
      *out = make_run(std::move(r.result), r.pretrain_rows, r.csv_path);
    }
  });
}

dlc_status dlc_sweep(const dlc_config* cfg, const char* axis,
                     const char* values, const char* out_dir, dlc_row_fn on_row,
                     void* user, char* summary_path, size_t cap) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(axis, "axis");
    require_arg(values, "values");
    diloco::ExperimentOptions opts;
    opts.out_dir = out_dir != nullptr ? out_dir : ".";
    opts.on_row = row_forwarder(on_row, user);
    const auto sweep =
        diloco::run_sweep(cfg->map, axis, split_values(values), opts);
    if (summary_path != nullptr) copy_out(sweep.summary_path, summary_path, cap, nullptr);
  });
}

dlc_status dlc_coordinator_serve(const dlc_config* cfg, const char* bind_addr,
                                 const char* out_dir, dlc_row_fn on_row,
                                 dlc_log_fn on_log, void* user, dlc_run** out) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(bind_addr, "bind_addr");
    if (out != nullptr) *out = nullptr;
    const diloco::RunConfig rc = cfg->map.resolve();
    const std::string dir = out_dir != nullptr ? out_dir : ".";
    const diloco::Dataset data = diloco::prepare_dataset(rc);

    diloco::RunOutputs files;
    files.csv_path = (std::filesystem::path(dir) / (rc.run_id + ".csv")).string();
    std::filesystem::create_directories(dir);
    std::error_code ec;
    std::filesystem::remove(files.csv_path, ec);
    diloco::CsvSink sink(files.csv_path);
    const auto forward = row_forwarder(on_row, user);
    auto log_row = [&](const diloco::MetricsRow& row) {
      sink.append(row);
      if (forward) forward(row);
    };
    std::vector<diloco::MetricsRow> pretrain_rows;
    const diloco::ParamVector theta0 =
        diloco::pretrain(rc, data, [&](const diloco::MetricsRow& row) {
          pretrain_rows.push_back(row);
          log_row(row);
        });
    diloco::CoordinatorOptions copts;
    copts.bind_addr = bind_addr;
    copts.on_row = log_row;
    copts.on_log = log_forwarder(on_log, user);
    diloco::RunResult result = diloco::coordinator_serve(rc, data, theta0, copts);
    diloco::write_run_files(rc, result, dir, files);
    if (out != nullptr) {
      *out = make_run(std::move(result), pretrain_rows, files.csv_path);
    }
  });
}

dlc_status dlc_worker_run(const dlc_config* cfg, const char* connect_addr,
                          uint32_t worker_id, dlc_log_fn on_log, void* user) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(connect_addr, "connect_addr");
    const diloco::RunConfig rc = cfg->map.resolve();
    const diloco::Dataset data = diloco::prepare_dataset(rc);
    diloco::WorkerOptions wopts;
    wopts.connect_addr = connect_addr;
    wopts.worker_id = worker_id;
    wopts.on_log = log_forwarder(on_log, user);
    diloco::worker_run(rc, data, wopts);
  });
}

dlc_status dlc_evaluate(const dlc_config* cfg, const char* params_path,
                        double* ppl) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(params_path, "params_path");
    require_arg(ppl, "ppl");
    *ppl = diloco::evaluate_checkpoint(cfg->map.resolve(), params_path);
  });
}

void dlc_run_free(dlc_run* run) { delete run; }

double dlc_run_final_ppl(const dlc_run* run) {
  if (run == nullptr || !run->result.final_val_ppl) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return *run->result.final_val_ppl;
}

size_t dlc_run_param_count(const dlc_run* run) {
  return run == nullptr ? 0 : run->result.final_params.size();
}

size_t dlc_run_params(const dlc_run* run, double* buf, size_t cap) {
  if (run == nullptr || buf == nullptr) return 0;
  const auto& v = run->result.final_params.values();
  const size_t n = std::min(cap, v.size());
  std::memcpy(buf, v.data(), n * sizeof(double));
  return n;
}

size_t dlc_run_row_count(const dlc_run* run) {
  return run == nullptr ? 0 : run->rows.size();
}

dlc_status dlc_run_row(const dlc_run* run, size_t index, char* buf, size_t cap,
                       size_t* needed) {
  return guarded([&] {
    require_arg(run, "run");
    diloco::require(index < run->rows.size(),
                    diloco::ErrorCode::kInvalidArgument, "row index out of range");
    copy_out(run->rows[index], buf, cap, needed);
  });
}

uint64_t dlc_run_rounds(const dlc_run* run) {
  return run == nullptr ? 0 : run->result.comm.rounds;
}

uint64_t dlc_run_bytes(const dlc_run* run) {
  return run == nullptr ? 0 : run->result.comm.bytes;
}

uint64_t dlc_run_total_inner_compute(const dlc_run* run) {
  return run == nullptr ? 0 : run->result.total_inner_compute;
}

const char* dlc_run_csv_path(const dlc_run* run) {
  return run == nullptr ? "" : run->csv_path.c_str();
}

}  // extern "C"
