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

#ifndef DILOCO_DATA_HPP_
#define DILOCO_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"
#include "rng.hpp"

namespace diloco {

// Byte-level documents. Tokens are raw bytes.
struct Corpus {
  std::vector<std::string> documents;
  std::size_t total_tokens = 0;

  static Corpus from_documents(std::vector<std::string> docs);
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Reads a text file (or every regular file of a directory, in name order).
// Documents are separated by one or more blank lines; the delimiters are not
// part of any document. Throws kIo if unreadable, kInvalidArgument if no
// document is found.
Corpus load_corpus(const std::string& path);

// Splits raw text with the same rules as load_corpus.
std::vector<std::string> split_documents(std::string_view text);

struct CorpusSplit {
  Corpus train;
  Corpus validation;
};

// The last ceil(val_frac * n) documents become the validation set (at least
// one, and at least one training document must remain).
CorpusSplit split_validation(const Corpus& corpus, double val_frac);

// A subset of training documents assigned to one worker.
struct Shard {
  std::vector<std::size_t> doc_indices;  // ascending
  std::size_t num_tokens = 0;

  friend bool operator==(const Shard&, const Shard&) = default;
};

Shard full_shard(const Corpus& corpus);

// Seeded random permutation dealt round-robin into k shards.
std::vector<Shard> shard_iid(const Corpus& corpus, std::size_t k,
                             std::uint64_t seed);

// k-means over L2-normalized byte histograms; one shard per cluster.
std::vector<Shard> shard_noniid(const Corpus& corpus, std::size_t k,
                                std::uint64_t seed,
                                std::size_t kmeans_iters = 50);

// 256-bin byte histogram, L2-normalized.
std::vector<double> byte_histogram(const std::string& doc);

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  // Sum of squared distances to assigned centroids after each iteration.
  std::vector<double> objective;
  std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Runs until assignments stop
// changing or `iters` iterations. An empty cluster takes the point of the
// largest cluster that lies farthest from its centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& features,
                    std::size_t k, std::size_t iters, std::uint64_t seed);

// Uniform draws over every (document, offset) pair with a full context and a
// next byte, which weights documents by their eligible positions.
class ShardSampler {
 public:
  ShardSampler(const Corpus& corpus, const Shard& shard,
               std::size_t context_len);

  Batch sample(std::size_t batch_size, Rng& rng) const;

  std::size_t eligible_positions() const { return total_; }

 private:
  const Corpus* corpus_;
  std::size_t context_len_;
  std::vector<std::size_t> docs_;
  std::vector<std::size_t> cumulative_;  // inclusive prefix sums
  std::size_t total_ = 0;
};

Batch sample_batch(const Corpus& corpus, const Shard& shard,
                   std::size_t batch_size, std::size_t context_len, Rng& rng);

}  // namespace diloco

#endif  // DILOCO_DATA_HPP_
