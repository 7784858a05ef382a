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


#include "config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "error.hpp"
#include "metrics.hpp"

namespace diloco {
namespace {

const std::vector<ConfigKey>& keys_table() {
  static const std::vector<ConfigKey> keys = {
      {"run_id", "run", false, "name of the run; prefixes output files"},
      {"corpus_path", "data/sotu.txt", false,
       "text file or directory of text files"},
      {"val_frac", "0.1", true, "fraction of documents held out"},
      {"vocab_size", "256", true, "byte vocabulary"},
      {"context_len", "16", true, "context bytes per prediction"},
      {"embed_dim", "32", true, "embedding width"},
      {"hidden_dim", "128", true, "hidden layer width"},
      {"batch_size", "32", true, "sequences per inner step"},
      {"k", "4", true, "workers"},
      {"H", "50", true, "inner steps per outer step"},
      {"T", "40", true, "outer steps"},
      {"pretrain_steps", "500", true, "single-worker steps before the outer loop"},
      {"data_regime", "noniid", true, "iid or noniid sharding"},
      {"drop_prob", "0", true, "probability that a worker's round is dropped"},
      {"prune_frac", "0", true, "fraction of each outer gradient group zeroed"},
      {"replica_schedule", "", true,
       "from_step:replicas pairs, e.g. 1:4,21:8 (empty: k throughout)"},
      {"inner_opt", "adamw", true, "adamw or sgd"},
      {"inner_schedule", "warmup_cosine", true, "warmup_cosine or constant"},
      {"inner_lr", "2e-3", true, "peak inner learning rate"},
      {"warmup_steps", "50", true, "linear warmup length"},
      {"weight_decay", "0.1", true, "decoupled AdamW weight decay"},
      {"inner_beta1", "0.9", true, "AdamW beta1"},
      {"inner_beta2", "0.99", true, "AdamW beta2"},
      {"inner_eps", "1e-8", true, "AdamW epsilon"},
      {"restart_warmup", "true", true,
       "restart the inner schedule after pretraining"},
      {"outer_opt", "nesterov", true, "sgd, sgdm, nesterov or adam"},
      {"outer_lr", "auto", true,
       "outer learning rate; auto picks the tuned value per optimizer"},
      {"outer_momentum", "0.9", true, "sgdm and nesterov momentum"},
      {"outer_adam_beta1", "0.9", true, "outer Adam beta1"},
      {"outer_adam_beta2", "0.95", true, "outer Adam beta2"},
      {"outer_adam_eps", "0.1", true, "outer Adam epsilon"},
      {"seed", "0", true, "master seed"},
      {"transport", "sim", false, "sim (in-process) or tcp (loopback cluster)"},
      {"threads", "1", false, "threads for sim inner phases"},
      {"eval_batches", "50", false, "validation batches per evaluation"},
      {"pretrain_eval_every", "0", false,
       "extra pretraining evaluation rows every n steps (0: final only)"},
      {"kmeans_iters", "50", true, "k-means iteration cap for noniid shards"},
      {"barrier_timeout_s", "0", false,
       "tcp gather timeout; 0 means 10x the median phase time"},
      {"initial_timeout_s", "300", false,
       "tcp wait for joins and for the first round"},
      {"connect_retry_s", "10", false, "tcp worker reconnect window"},
      {"wire_f32", "false", true, "send payloads as f32"},
  };
  return keys;
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : keys_table()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v,
                            const std::string& expected) {
  fail(ErrorCode::kConfig,
       "config key '" + key + "': expected " + expected + ", got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    bad_value(key, v, "a nonnegative integer");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() ||
      !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::vector<ReplicaPhase> parse_schedule(const std::string& key,
                                         const std::string& v) {
  std::vector<ReplicaPhase> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos) bad_value(key, v, "from_step:replicas pairs");
    ReplicaPhase ph;
    ph.from_step = static_cast<std::uint32_t>(
        parse_uint(key, trim(item.substr(0, colon))));
    ph.replicas = parse_uint(key, trim(item.substr(colon + 1)));
    out.push_back(ph);
  }
  return out;
}

std::string schedule_text(const std::vector<ReplicaPhase>& s) {
  std::string out;
  for (const auto& ph : s) {
    if (!out.empty()) out += ',';
    out += std::to_string(ph.from_step) + ':' + std::to_string(ph.replicas);
  }
  return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Preset {
  std::string name;
  std::vector<std::pair<std::string, std::string>> values;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"default", {}},
      {"diloco-default", {{"k", "8"}}},
      {"diloco-k1", {{"k", "1"}}},
      {"baseline",
       {{"k", "1"}, {"H", "2000"}, {"T", "1"}, {"outer_opt", "sgd"},
        {"outer_lr", "1"}}},
      {"baseline-8x-batch",
       {{"k", "1"}, {"H", "2000"}, {"T", "1"}, {"outer_opt", "sgd"},
        {"outer_lr", "1"}, {"batch_size", "256"}}},
      {"baseline-8x-updates",
       {{"k", "1"}, {"H", "16000"}, {"T", "1"}, {"outer_opt", "sgd"},
        {"outer_lr", "1"}}},
      {"adaptive-doubling",
       {{"data_regime", "iid"}, {"replica_schedule", "1:4,21:8"}}},
      {"adaptive-halving",
       {{"data_regime", "iid"}, {"replica_schedule", "1:8,21:4"}}},
      {"adaptive-ramp-up",
       {{"data_regime", "iid"},
        {"replica_schedule", "1:1,6:2,11:3,16:4,21:5,26:6,31:7,36:8"}}},
      {"adaptive-ramp-down",
       {{"data_regime", "iid"},
        {"replica_schedule", "1:8,6:7,11:6,16:5,21:4,26:3,31:2,36:1"}}},
  };
  return table;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() { return keys_table(); }

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.push_back(p.name);
  return names;
}

std::string_view to_string(DataRegime regime) {
  return regime == DataRegime::kIid ? "iid" : "noniid";
}

std::string_view to_string(TransportKind transport) {
  return transport == TransportKind::kSim ? "sim" : "tcp";
}

ConfigMap::ConfigMap() {
  for (const auto& k : keys_table()) values_[k.name] = k.default_value;
}

ConfigMap ConfigMap::preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name != name) continue;
    ConfigMap m;
    for (const auto& [k, v] : p.values) m.set(k, v);
    return m;
  }
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  fail(ErrorCode::kConfig,
       "unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  if (find_key(key) == nullptr) {
    fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
  values_[key] = value;
}

const std::string& ConfigMap::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
  return it->second;
}

void ConfigMap::merge_text(std::string_view text, const std::string& source) {
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kConfig, source + ":" + std::to_string(lineno) +
                                   ": expected 'key = value'");
    }
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (find_key(key) == nullptr) {
      fail(ErrorCode::kConfig, source + ":" + std::to_string(lineno) +
                                   ": unknown config key '" + key + "'");
    }
    values_[key] = value;
  }
}

void ConfigMap::merge_json(std::string_view json, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, source + ": invalid JSON: " + e.what());
  }
  const nlohmann::json& obj = doc.contains("config") ? doc["config"] : doc;
  require(obj.is_object(), ErrorCode::kConfig,
          source + ": expected a JSON object of config keys");
  for (const auto& [key, value] : obj.items()) {
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = bool_text(value.get<bool>());
    } else if (value.is_number_unsigned()) {
      text = std::to_string(value.get<std::uint64_t>());
    } else if (value.is_number_integer()) {
      text = std::to_string(value.get<std::int64_t>());
    } else if (value.is_number()) {
      text = format_double(value.get<double>());
    } else {
      fail(ErrorCode::kConfig,
           source + ": config key '" + key + "' has an unsupported type");
    }
    if (find_key(key) == nullptr) {
      fail(ErrorCode::kConfig,
           source + ": unknown config key '" + key + "'");
    }
    values_[key] = text;
  }
}

void ConfigMap::merge_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    merge_json(text, path);
  } else {
    merge_text(text, path);
  }
}

RunConfig ConfigMap::resolve() const {
  auto str = [&](const char* k) -> const std::string& { return get(k); };
  auto u = [&](const char* k) { return parse_uint(k, str(k)); };
  auto r = [&](const char* k) { return parse_real(k, str(k)); };
  auto b = [&](const char* k) { return parse_bool(k, str(k)); };

  RunConfig c;
  c.run_id = str("run_id");
  c.corpus_path = str("corpus_path");
  c.val_frac = r("val_frac");
  c.model.vocab_size = u("vocab_size");
  c.model.context_len = u("context_len");
  c.model.embed_dim = u("embed_dim");
  c.model.hidden_dim = u("hidden_dim");
  c.batch_size = u("batch_size");
  c.k = u("k");
  c.H = u("H");
  c.T = u("T");
  c.pretrain_steps = u("pretrain_steps");

  const std::string& regime = str("data_regime");
  if (regime == "iid") {
    c.regime = DataRegime::kIid;
  } else if (regime == "noniid") {
    c.regime = DataRegime::kNonIid;
  } else {
    bad_value("data_regime", regime, "iid or noniid");
  }
  c.drop_prob = r("drop_prob");
  c.prune_frac = r("prune_frac");
  c.replica_schedule = parse_schedule("replica_schedule", str("replica_schedule"));
  if (!c.replica_schedule.empty()) c.k = c.max_k();

  const std::string& inner_opt = str("inner_opt");
  if (inner_opt == "adamw") {
    c.inner.kind = InnerKind::kAdamW;
  } else if (inner_opt == "sgd") {
    c.inner.kind = InnerKind::kSgd;
  } else {
    bad_value("inner_opt", inner_opt, "adamw or sgd");
  }
  const std::string& sched = str("inner_schedule");
  if (sched == "warmup_cosine") {
    c.inner.schedule = LrScheduleKind::kWarmupCosine;
  } else if (sched == "constant") {
    c.inner.schedule = LrScheduleKind::kConstant;
  } else {
    bad_value("inner_schedule", sched, "warmup_cosine or constant");
  }
  c.inner.base_lr = r("inner_lr");
  c.inner.warmup_steps = u("warmup_steps");
  c.inner.weight_decay = r("weight_decay");
  c.inner.beta1 = r("inner_beta1");
  c.inner.beta2 = r("inner_beta2");
  c.inner.eps = r("inner_eps");
  c.restart_warmup = b("restart_warmup");

  try {
    c.outer.kind = parse_outer_kind(str("outer_opt"));
  } catch (const Error&) {
    bad_value("outer_opt", str("outer_opt"), "sgd, sgdm, nesterov or adam");
  }
  c.outer.lr = str("outer_lr") == "auto" ? OuterHyper::default_lr(c.outer.kind)
                                         : r("outer_lr");
  c.outer.momentum = r("outer_momentum");
  c.outer.adam_beta1 = r("outer_adam_beta1");
  c.outer.adam_beta2 = r("outer_adam_beta2");
  c.outer.adam_eps = r("outer_adam_eps");

  c.master_seed = u("seed");
  c.model.seed = c.master_seed;
  const std::string& transport = str("transport");
  if (transport == "sim") {
    c.transport = TransportKind::kSim;
  } else if (transport == "tcp") {
    c.transport = TransportKind::kTcp;
  } else {
    bad_value("transport", transport, "sim or tcp");
  }
  c.threads = u("threads");
  c.eval_batches = u("eval_batches");
  c.pretrain_eval_every = u("pretrain_eval_every");
  c.kmeans_iters = u("kmeans_iters");
  c.barrier_timeout_s = r("barrier_timeout_s");
  c.initial_timeout_s = r("initial_timeout_s");
  c.connect_retry_s = r("connect_retry_s");
  c.wire_f32 = b("wire_f32");

  c.validate();
  return c;
}

ConfigMap ConfigMap::from_run_config(const RunConfig& c) {
  ConfigMap m;
  m.values_["run_id"] = c.run_id;
  m.values_["corpus_path"] = c.corpus_path;
  m.values_["val_frac"] = format_double(c.val_frac);
  m.values_["vocab_size"] = std::to_string(c.model.vocab_size);
  m.values_["context_len"] = std::to_string(c.model.context_len);
  m.values_["embed_dim"] = std::to_string(c.model.embed_dim);
  m.values_["hidden_dim"] = std::to_string(c.model.hidden_dim);
  m.values_["batch_size"] = std::to_string(c.batch_size);
  m.values_["k"] = std::to_string(c.k);
  m.values_["H"] = std::to_string(c.H);
  m.values_["T"] = std::to_string(c.T);
  m.values_["pretrain_steps"] = std::to_string(c.pretrain_steps);
  m.values_["data_regime"] = std::string(to_string(c.regime));
  m.values_["drop_prob"] = format_double(c.drop_prob);
  m.values_["prune_frac"] = format_double(c.prune_frac);
  m.values_["replica_schedule"] = schedule_text(c.replica_schedule);
  m.values_["inner_opt"] = c.inner.kind == InnerKind::kAdamW ? "adamw" : "sgd";
  m.values_["inner_schedule"] =
      c.inner.schedule == LrScheduleKind::kWarmupCosine ? "warmup_cosine"
                                                        : "constant";
  m.values_["inner_lr"] = format_double(c.inner.base_lr);
  m.values_["warmup_steps"] = std::to_string(c.inner.warmup_steps);
  m.values_["weight_decay"] = format_double(c.inner.weight_decay);
  m.values_["inner_beta1"] = format_double(c.inner.beta1);
  m.values_["inner_beta2"] = format_double(c.inner.beta2);
  m.values_["inner_eps"] = format_double(c.inner.eps);
  m.values_["restart_warmup"] = bool_text(c.restart_warmup);
  m.values_["outer_opt"] = std::string(to_string(c.outer.kind));
  m.values_["outer_lr"] = format_double(c.outer.lr);
  m.values_["outer_momentum"] = format_double(c.outer.momentum);
  m.values_["outer_adam_beta1"] = format_double(c.outer.adam_beta1);
  m.values_["outer_adam_beta2"] = format_double(c.outer.adam_beta2);
  m.values_["outer_adam_eps"] = format_double(c.outer.adam_eps);
  m.values_["seed"] = std::to_string(c.master_seed);
  m.values_["transport"] = std::string(to_string(c.transport));
  m.values_["threads"] = std::to_string(c.threads);
  m.values_["eval_batches"] = std::to_string(c.eval_batches);
  m.values_["pretrain_eval_every"] = std::to_string(c.pretrain_eval_every);
  m.values_["kmeans_iters"] = std::to_string(c.kmeans_iters);
  m.values_["barrier_timeout_s"] = format_double(c.barrier_timeout_s);
  m.values_["initial_timeout_s"] = format_double(c.initial_timeout_s);
  m.values_["connect_retry_s"] = format_double(c.connect_retry_s);
  m.values_["wire_f32"] = bool_text(c.wire_f32);
  return m;
}

std::string ConfigMap::to_text() const {
  std::string out;
  for (const auto& k : keys_table()) {
    out += k.name + " = " + values_.at(k.name) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const ConfigMap m = ConfigMap::from_run_config(cfg);
  std::string canon;
  for (const auto& k : keys_table()) {
    if (k.hashed) canon += k.name + "=" + m.get(k.name) + "\n";
  }
  return fnv1a(canon);
}

}  // namespace diloco
