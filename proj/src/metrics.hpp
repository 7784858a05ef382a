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

#ifndef DILOCO_METRICS_HPP_
#define DILOCO_METRICS_HPP_

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"
#include "outer_gradient.hpp"

namespace diloco {

// Fixed evaluation positions drawn once from the validation documents with
// their own random stream, so repeated evaluations see identical data.
struct EvalSet {
  std::vector<Batch> batches;

  std::size_t positions() const;
};

EvalSet make_eval_set(const Corpus& validation, const ModelConfig& cfg,
                      std::size_t num_batches, std::size_t batch_size,
                      std::uint64_t seed);

// exp(mean next-token NLL) over every position of the eval set.
double evaluate_perplexity(const ParamVector& params, const ModelConfig& cfg,
                           const EvalSet& eval);

struct OuterGradStats {
  std::optional<double> mean_cos_sim;  // needs >= 2 gradients
  std::optional<double> std_cos_sim;   // population std over all pairs
  std::optional<double> mean_delta_norm;
  std::optional<double> agg_delta_norm;
};

OuterGradStats outer_grad_stats(std::span<const OuterGradient> grads,
                                const ParamVector* aggregated);

struct MetricsRow {
  std::string run_id;
  std::uint64_t outer_step = 0;
  std::uint64_t inner_step = 0;
  std::uint64_t k_t = 0;
  std::optional<double> val_ppl;
  std::optional<double> train_loss;
  std::optional<double> mean_cos_sim;
  std::optional<double> std_cos_sim;
  std::optional<double> mean_delta_norm;
  std::optional<double> agg_delta_norm;
  std::uint64_t dropped_count = 0;
  std::uint64_t bytes_communicated = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr const char* kCsvHeader =
    "run_id,outer_step,inner_step,k_t,val_ppl,train_loss,mean_cos_sim,"
    "std_cos_sim,mean_delta_norm,agg_delta_norm,dropped_count,"
    "bytes_communicated";

// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

std::string to_csv_line(const MetricsRow& row);
MetricsRow parse_csv_line(const std::string& line);

// Appends rows to a CSV file; the header is written only when the file is
// new or empty.
class CsvSink {
 public:
  explicit CsvSink(const std::string& path);

  void append(const MetricsRow& row);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

std::vector<MetricsRow> read_csv(const std::string& path);

}  // namespace diloco

#endif  // DILOCO_METRICS_HPP_
