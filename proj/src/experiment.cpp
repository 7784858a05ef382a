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


#include "experiment.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "error.hpp"
#include "transport.hpp"

namespace diloco {
namespace {

namespace fs = std::filesystem;

constexpr char kCheckpointMagic[4] = {'D', 'L', 'C', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex;
  ss.width(16);
  ss.fill('0');
  ss << v;
  return ss.str();
}

std::string out_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo,
          "cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
}

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

std::uint32_t crc_bytes(const std::string& s, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(s.data());
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_params(const std::string& path, const ParamVector& params,
                 std::uint64_t config_hash) {
  std::string buf;
  buf.reserve(24 + 8 * params.size() + 4);
  buf.append(kCheckpointMagic, 4);
  put_le<std::uint32_t>(buf, kCheckpointVersion);
  put_le<std::uint64_t>(buf, config_hash);
  put_le<std::uint64_t>(buf, params.size());
  for (double v : params.values()) {
    put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v));
  }
  put_le<std::uint32_t>(buf, crc_bytes(buf, buf.size()));
  write_text(path, buf);
}

ParamVector load_params(const std::string& path, std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  require(buf.size() >= 28 && std::memcmp(p, kCheckpointMagic, 4) == 0,
          ErrorCode::kIo, "'" + path + "' is not a checkpoint");
  require(get_le<std::uint32_t>(p + 4) == kCheckpointVersion, ErrorCode::kIo,
          "'" + path + "': unsupported checkpoint version");
  const auto count = get_le<std::uint64_t>(p + 16);
  require(count <= (buf.size() - 28) / 8 && buf.size() == 28 + 8 * count,
          ErrorCode::kIo, "'" + path + "': truncated checkpoint");
  require(get_le<std::uint32_t>(p + buf.size() - 4) ==
              crc_bytes(buf, buf.size() - 4),
          ErrorCode::kIo, "'" + path + "': checkpoint crc mismatch");
  if (config_hash != nullptr) *config_hash = get_le<std::uint64_t>(p + 8);
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 24 + 8 * i));
  }
  return ParamVector(std::move(values));
}

void write_run_files(const RunConfig& cfg, const RunResult& result,
                     const std::string& out_dir, RunOutputs& paths) {
  ensure_dir(out_dir);
  const ConfigMap resolved = ConfigMap::from_run_config(cfg);
  const std::uint64_t hash = config_hash(cfg);
  paths.sidecar_path = out_path(out_dir, cfg.run_id + ".json");
  paths.config_path = out_path(out_dir, cfg.run_id + ".cfg");
  paths.params_path = out_path(out_dir, cfg.run_id + ".params");

  nlohmann::ordered_json doc;
  doc["run_id"] = cfg.run_id;
  nlohmann::ordered_json conf = nlohmann::ordered_json::object();
  for (const auto& key : config_keys()) conf[key.name] = resolved.get(key.name);
  doc["config"] = conf;
  doc["config_hash"] = hex64(hash);
  doc["seeds"] = {
      {"master_seed", cfg.master_seed},
      {"init", derive_seed(cfg.master_seed, StreamPurpose::kInit)},
      {"pretrain", derive_seed(cfg.master_seed, StreamPurpose::kPretrain)},
      {"shard", derive_seed(cfg.master_seed, StreamPurpose::kShard)},
      {"eval", derive_seed(cfg.master_seed, StreamPurpose::kEval)},
  };
  doc["param_count"] = cfg.model.param_count();
  nlohmann::ordered_json res;
  if (result.final_val_ppl) {
    res["final_val_ppl"] = *result.final_val_ppl;
  } else {
    res["final_val_ppl"] = nullptr;
  }
  res["outer_rounds"] = result.comm.rounds;
  res["bytes_communicated"] = result.comm.bytes;
  res["total_inner_compute"] = result.total_inner_compute;
  res["gathers_per_worker"] = result.comm.gathers;
  res["broadcasts_per_worker"] = result.comm.broadcasts;
  doc["result"] = res;
  doc["files"] = {{"metrics", fs::path(paths.csv_path).filename().string()},
                  {"config", fs::path(paths.config_path).filename().string()},
                  {"params", fs::path(paths.params_path).filename().string()}};
  write_text(paths.sidecar_path, doc.dump(2) + "\n");
  write_text(paths.config_path, resolved.to_text());
  save_params(paths.params_path, result.final_params, hash);
}

RunOutputs run_experiment(const RunConfig& cfg, const ExperimentOptions& opts) {
  cfg.validate();
  return run_experiment(cfg, prepare_dataset(cfg), opts);
}

RunOutputs run_experiment(const RunConfig& cfg, const Dataset& data,
                          const ExperimentOptions& opts) {
  cfg.validate();
  ensure_dir(opts.out_dir);
  RunOutputs out;
  out.csv_path = out_path(opts.out_dir, cfg.run_id + ".csv");
  std::error_code ec;
  fs::remove(out.csv_path, ec);
  CsvSink sink(out.csv_path);
  auto log_row = [&](const MetricsRow& row) {
    sink.append(row);
    if (opts.on_row) opts.on_row(row);
  };

  const ParamVector theta0 = pretrain(cfg, data, [&](const MetricsRow& row) {
    out.pretrain_rows.push_back(row);
    log_row(row);
  });
  if (cfg.transport == TransportKind::kTcp) {
    out.result = run_tcp_loopback(cfg, data, theta0, log_row);
  } else {
    out.result = run_sim(cfg, data, theta0, SimOptions{log_row});
  }
  write_run_files(cfg, out.result, opts.out_dir, out);
  return out;
}

SweepOutputs run_sweep(const ConfigMap& base, const std::string& axis,
                       const std::vector<std::string>& values,
                       const ExperimentOptions& opts) {
  const auto& axes = sweep_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    std::string known;
    for (const auto& a : axes) known += (known.empty() ? "" : ", ") + a;
    fail(ErrorCode::kConfig,
         "unknown sweep axis '" + axis + "' (known: " + known + ")");
  }
  require(!values.empty(), ErrorCode::kConfig, "sweep needs at least one value");
  const std::string base_id = base.get("run_id");

  // Resolve every point first so a bad value fails before any run starts.
  std::vector<RunConfig> configs;
  for (const auto& v : values) {
    ConfigMap m = base;
    m.set(axis, v);
    m.set("run_id", base_id + "_" + axis + "_" + v);
    configs.push_back(m.resolve());
  }

  SweepOutputs out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const RunOutputs r = run_experiment(configs[i], opts);
    SweepEntry e;
    e.value = values[i];
    e.run_id = configs[i].run_id;
    e.final_val_ppl = r.result.final_val_ppl;
    e.total_inner_compute = r.result.total_inner_compute;
    e.bytes_communicated = r.result.comm.bytes;
    e.csv_path = r.csv_path;
    out.entries.push_back(std::move(e));
  }

  out.summary_path = out_path(opts.out_dir, base_id + "_sweep_" + axis + ".csv");
  std::string text =
      "run_id,axis,value,final_val_ppl,total_inner_compute,bytes_communicated\n";
  for (const auto& e : out.entries) {
    text += e.run_id + "," + axis + "," + e.value + "," +
            (e.final_val_ppl ? format_double(*e.final_val_ppl) : "") + "," +
            std::to_string(e.total_inner_compute) + "," +
            std::to_string(e.bytes_communicated) + "\n";
  }
  write_text(out.summary_path, text);
  return out;
}

double evaluate_checkpoint(const RunConfig& cfg, const std::string& params_path) {
  cfg.validate();
  std::uint64_t hash = 0;
  const ParamVector params = load_params(params_path, &hash);
  require(params.size() == cfg.model.param_count(), ErrorCode::kDimension,
          "checkpoint has " + std::to_string(params.size()) +
              " parameters, the model config needs " +
              std::to_string(cfg.model.param_count()));
  const Corpus corpus = load_corpus(cfg.corpus_path);
  const CorpusSplit split = split_validation(corpus, cfg.val_frac);
  const EvalSet eval = make_eval_set(split.validation, cfg.model,
                                     cfg.eval_batches, cfg.batch_size,
                                     cfg.master_seed);
  return evaluate_perplexity(params, cfg.model, eval);
}

}  // namespace diloco
