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

#include "metrics.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace diloco {

std::size_t EvalSet::positions() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

EvalSet make_eval_set(const Corpus& validation, const ModelConfig& cfg,
                      std::size_t num_batches, std::size_t batch_size,
                      std::uint64_t seed) {
  require(!validation.documents.empty(), ErrorCode::kInvalidArgument,
          "evaluation: empty validation set");
  require(num_batches >= 1 && batch_size >= 1, ErrorCode::kConfig,
          "eval_batches and batch_size must be >= 1");
  const ShardSampler sampler(validation, full_shard(validation),
                             cfg.context_len);
  Rng rng(seed, StreamPurpose::kEval);
  EvalSet set;
  for (std::size_t i = 0; i < num_batches; ++i) {
    set.batches.push_back(sampler.sample(batch_size, rng));
  }
  return set;
}

double evaluate_perplexity(const ParamVector& params, const ModelConfig& cfg,
                           const EvalSet& eval) {
  require(eval.positions() > 0, ErrorCode::kInvalidArgument,
          "evaluation: empty validation set");
  double total = 0.0;
  for (const Batch& b : eval.batches) {
    for (double nll : example_nll(params, cfg, b)) total += nll;
  }
  return std::exp(total / static_cast<double>(eval.positions()));
}

OuterGradStats outer_grad_stats(std::span<const OuterGradient> grads,
                                const ParamVector* aggregated) {
  OuterGradStats s;
  if (aggregated != nullptr) s.agg_delta_norm = l2_norm(*aggregated);
  if (grads.empty()) return s;
  double norm_sum = 0.0;
  for (const auto& g : grads) norm_sum += l2_norm(g.delta);
  s.mean_delta_norm = norm_sum / static_cast<double>(grads.size());
  if (grads.size() < 2) return s;

  std::vector<double> sims;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (std::size_t j = i + 1; j < grads.size(); ++j) {
      // A worker that did not move has no direction; skip its pairs.
      if (l2_norm(grads[i].delta) == 0.0 || l2_norm(grads[j].delta) == 0.0) {
        continue;
      }
      sims.push_back(cosine_similarity(grads[i].delta, grads[j].delta));
    }
  }
  if (sims.empty()) return s;
  double mean = 0.0;
  for (double v : sims) mean += v;
  mean /= static_cast<double>(sims.size());
  double var = 0.0;
  for (double v : sims) var += (v - mean) * (v - mean);
  var /= static_cast<double>(sims.size());
  s.mean_cos_sim = mean;
  s.std_cos_sim = std::sqrt(var);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void put_opt(std::string& out, const std::optional<double>& v) {
  out.push_back(',');
  if (v && std::isfinite(*v)) out += format_double(*v);
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          ErrorCode::kInvalidArgument, "csv: bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          ErrorCode::kInvalidArgument, "csv: bad integer '" + s + "'");
  return v;
}

}  // namespace

std::string to_csv_line(const MetricsRow& r) {
  std::string out = r.run_id;
  out += ',' + std::to_string(r.outer_step);
  out += ',' + std::to_string(r.inner_step);
  out += ',' + std::to_string(r.k_t);
  put_opt(out, r.val_ppl);
  put_opt(out, r.train_loss);
  put_opt(out, r.mean_cos_sim);
  put_opt(out, r.std_cos_sim);
  put_opt(out, r.mean_delta_norm);
  put_opt(out, r.agg_delta_norm);
  out += ',' + std::to_string(r.dropped_count);
  out += ',' + std::to_string(r.bytes_communicated);
  return out;
}

MetricsRow parse_csv_line(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  f.push_back(cur);
  require(f.size() == 12, ErrorCode::kInvalidArgument,
          "csv: expected 12 columns, got " + std::to_string(f.size()));
  MetricsRow r;
  r.run_id = f[0];
  r.outer_step = parse_u64(f[1]);
  r.inner_step = parse_u64(f[2]);
  r.k_t = parse_u64(f[3]);
  r.val_ppl = parse_opt(f[4]);
  r.train_loss = parse_opt(f[5]);
  r.mean_cos_sim = parse_opt(f[6]);
  r.std_cos_sim = parse_opt(f[7]);
  r.mean_delta_norm = parse_opt(f[8]);
  r.agg_delta_norm = parse_opt(f[9]);
  r.dropped_count = parse_u64(f[10]);
  r.bytes_communicated = parse_u64(f[11]);
  return r;
}

CsvSink::CsvSink(const std::string& path) : path_(path) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) ||
                     std::filesystem::file_size(path, ec) == 0;
  out_.open(path, std::ios::app);
  if (!out_) fail(ErrorCode::kIo, "cannot open metrics file '" + path + "'");
  if (fresh) {
    out_ << kCsvHeader << '\n';
    out_.flush();
  }
}

void CsvSink::append(const MetricsRow& row) {
  out_ << to_csv_line(row) << '\n';
  out_.flush();
  if (!out_) fail(ErrorCode::kIo, "write to '" + path_ + "' failed");
}

std::vector<MetricsRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::string line;
  std::vector<MetricsRow> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      require(line == kCsvHeader, ErrorCode::kInvalidArgument,
              "csv: unexpected header in '" + path + "'");
      header = false;
      continue;
    }
    if (!line.empty()) rows.push_back(parse_csv_line(line));
  }
  return rows;
}

}  // namespace diloco
