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

#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "error.hpp"

namespace diloco {
namespace {

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
  });
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open corpus file '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::kIo, "error reading '" + p.string() + "'");
  return ss.str();
}

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

Corpus Corpus::from_documents(std::vector<std::string> docs) {
  Corpus c;
  for (auto& d : docs) {
    require(!d.empty(), ErrorCode::kInvalidArgument, "corpus: empty document");
    c.total_tokens += d.size();
  }
  c.documents = std::move(docs);
  return c;
}

std::vector<std::string> split_documents(std::string_view text) {
  std::vector<std::string> docs;
  std::string current;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (is_blank(line)) {
      if (!current.empty()) docs.push_back(std::move(current));
      current.clear();
    } else {
      if (!current.empty()) current.push_back('\n');
      current.append(line);
    }
    pos = end + 1;
  }
  if (!current.empty()) docs.push_back(std::move(current));
  return docs;
}

Corpus load_corpus(const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const fs::path root(path);
  if (!fs::exists(root, ec)) {
    fail(ErrorCode::kIo, "corpus path '" + path + "' does not exist");
  }
  std::vector<fs::path> files;
  if (fs::is_directory(root, ec)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(root);
  }
  std::vector<std::string> docs;
  for (const auto& f : files) {
    auto part = split_documents(read_file(f));
    std::move(part.begin(), part.end(), std::back_inserter(docs));
  }
  if (docs.empty()) {
    fail(ErrorCode::kInvalidArgument, "corpus '" + path + "' has no documents");
  }
  return Corpus::from_documents(std::move(docs));
}

CorpusSplit split_validation(const Corpus& corpus, double val_frac) {
  const std::size_t n = corpus.documents.size();
  require(val_frac > 0.0 && val_frac < 1.0, ErrorCode::kConfig,
          "val_frac must lie in (0, 1)");
  std::size_t n_val =
      static_cast<std::size_t>(std::ceil(val_frac * static_cast<double>(n)));
  n_val = std::max<std::size_t>(n_val, 1);
  require(n_val < n, ErrorCode::kInvalidArgument,
          "corpus has too few documents for a train/validation split");
  std::vector<std::string> train(corpus.documents.begin(),
                                 corpus.documents.end() - n_val);
  std::vector<std::string> val(corpus.documents.end() - n_val,
                               corpus.documents.end());
  return {Corpus::from_documents(std::move(train)),
          Corpus::from_documents(std::move(val))};
}

Shard full_shard(const Corpus& corpus) {
  Shard s;
  s.doc_indices.resize(corpus.documents.size());
  std::iota(s.doc_indices.begin(), s.doc_indices.end(), std::size_t{0});
  s.num_tokens = corpus.total_tokens;
  return s;
}

namespace {

std::vector<Shard> shards_from_assignment(const Corpus& corpus,
                                          const std::vector<std::size_t>& a,
                                          std::size_t k) {
  std::vector<Shard> shards(k);
  for (std::size_t d = 0; d < a.size(); ++d) {
    shards[a[d]].doc_indices.push_back(d);
    shards[a[d]].num_tokens += corpus.documents[d].size();
  }
  return shards;
}

void check_shard_count(const Corpus& corpus, std::size_t k) {
  require(k >= 1, ErrorCode::kInvalidArgument, "shard count must be >= 1");
  if (corpus.documents.size() < k) {
    fail(ErrorCode::kInvalidArgument,
         "cannot split " + std::to_string(corpus.documents.size()) +
             " documents into " + std::to_string(k) + " shards");
  }
}

}  // namespace

std::vector<Shard> shard_iid(const Corpus& corpus, std::size_t k,
                             std::uint64_t seed) {
  check_shard_count(corpus, k);
  const std::size_t n = corpus.documents.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, StreamPurpose::kShard);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t i = 0; i < n; ++i) assignment[perm[i]] = i % k;
  return shards_from_assignment(corpus, assignment, k);
}

std::vector<double> byte_histogram(const std::string& doc) {
  std::vector<double> h(256, 0.0);
  for (unsigned char c : doc) h[c] += 1.0;
  double norm = 0.0;
  for (double v : h) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : h) v /= norm;
  }
  return h;
}

std::vector<Shard> shard_noniid(const Corpus& corpus, std::size_t k,
                                std::uint64_t seed, std::size_t kmeans_iters) {
  check_shard_count(corpus, k);
  std::vector<std::vector<double>> features;
  features.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) features.push_back(byte_histogram(d));
  const KMeansResult km = kmeans(features, k, kmeans_iters, seed);
  return shards_from_assignment(corpus, km.assignments, k);
}

KMeansResult kmeans(const std::vector<std::vector<double>>& features,
                    std::size_t k, std::size_t iters, std::uint64_t seed) {
  const std::size_t n = features.size();
  require(k >= 1 && n >= k, ErrorCode::kInvalidArgument,
          "kmeans: need at least k points");
  require(iters >= 1, ErrorCode::kInvalidArgument, "kmeans: iters must be >= 1");
  const std::size_t dim = features.front().size();
  for (const auto& f : features) {
    require(f.size() == dim, ErrorCode::kDimension,
            "kmeans: features differ in dimension");
  }

  Rng rng(seed, StreamPurpose::kKMeans);
  KMeansResult r;

  // k-means++ seeding.
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  r.centroids.push_back(features[first]);
  chosen[first] = true;
  while (r.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(features[i], r.centroids.back()));
      if (!chosen[i]) total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform01() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] == 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    } else {
      // Every remaining point duplicates a centroid.
      std::size_t nth = rng.below(n - r.centroids.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        if (nth-- == 0) {
          pick = i;
          break;
        }
      }
    }
    r.centroids.push_back(features[pick]);
    chosen[pick] = true;
  }

  r.assignments.assign(n, k);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(features[i], r.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (r.assignments[i] != best) {
        r.assignments[i] = best;
        changed = true;
      }
    }

    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t a : r.assignments) ++counts[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const std::size_t largest = static_cast<std::size_t>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (r.assignments[i] != largest) continue;
        const double d = squared_distance(features[i], r.centroids[largest]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.assignments[far] = c;
      --counts[largest];
      ++counts[c];
      changed = true;
    }

    for (std::size_t c = 0; c < k; ++c) {
      std::fill(r.centroids[c].begin(), r.centroids[c].end(), 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& cen = r.centroids[r.assignments[i]];
      for (std::size_t j = 0; j < dim; ++j) cen[j] += features[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (double& v : r.centroids[c]) v /= static_cast<double>(counts[c]);
    }

    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      obj += squared_distance(features[i], r.centroids[r.assignments[i]]);
    }
    r.objective.push_back(obj);
    r.iterations = it + 1;
    if (!changed) break;
  }
  return r;
}

ShardSampler::ShardSampler(const Corpus& corpus, const Shard& shard,
                           std::size_t context_len)
    : corpus_(&corpus), context_len_(context_len) {
  for (std::size_t d : shard.doc_indices) {
    require(d < corpus.documents.size(), ErrorCode::kInvalidArgument,
            "shard references a document outside the corpus");
    const std::size_t len = corpus.documents[d].size();
    if (len < context_len + 1) continue;
    total_ += len - context_len;
    docs_.push_back(d);
    cumulative_.push_back(total_);
  }
  require(total_ > 0, ErrorCode::kInvalidArgument,
          "shard has no document with at least context_len + 1 bytes");
}

Batch ShardSampler::sample(std::size_t batch_size, Rng& rng) const {
  Batch b;
  b.context_len = context_len_;
  b.contexts.reserve(batch_size * context_len_);
  b.targets.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t r = rng.below(total_);
    const std::size_t slot = static_cast<std::size_t>(
        std::upper_bound(cumulative_.begin(), cumulative_.end(), r) -
        cumulative_.begin());
    const std::size_t offset = r - (slot == 0 ? 0 : cumulative_[slot - 1]);
    const std::string& doc = corpus_->documents[docs_[slot]];
    for (std::size_t c = 0; c < context_len_; ++c) {
      b.contexts.push_back(static_cast<unsigned char>(doc[offset + c]));
    }
    b.targets.push_back(static_cast<unsigned char>(doc[offset + context_len_]));
  }
  return b;
}

Batch sample_batch(const Corpus& corpus, const Shard& shard,
                   std::size_t batch_size, std::size_t context_len, Rng& rng) {
  return ShardSampler(corpus, shard, context_len).sample(batch_size, rng);
}

}  // namespace diloco
