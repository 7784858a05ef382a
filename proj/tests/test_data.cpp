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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "data.hpp"
#include "error.hpp"
#include "test_util.hpp"

using namespace diloco;

namespace {

std::string write_file(const std::string& dir, const std::string& name,
                       const std::string& text) {
  const std::string path = dir + "/" + name;
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

void check_partition(const std::vector<Shard>& shards, const Corpus& c) {
  std::vector<int> seen(c.documents.size(), 0);
  for (const Shard& s : shards) {
    std::size_t tokens = 0;
    REQUIRE(std::is_sorted(s.doc_indices.begin(), s.doc_indices.end()));
    for (std::size_t d : s.doc_indices) {
      REQUIRE(d < c.documents.size());
      seen[d] += 1;
      tokens += c.documents[d].size();
    }
    REQUIRE(tokens == s.num_tokens);
  }
  for (int v : seen) REQUIRE(v == 1);
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("blank lines delimit documents") {
  const std::string dir = testing::temp_dir("data_load");
  const auto c = load_corpus(write_file(dir, "a.txt", "ab\n\ncd"));
  CHECK(c.documents == std::vector<std::string>{"ab", "cd"});
  CHECK(c.total_tokens == 4);
  const auto d = load_corpus(write_file(dir, "b.txt", "\n\nline one\nline two\n \n\n\nx\n"));
  CHECK(d.documents == std::vector<std::string>{"line one\nline two", "x"});
  CHECK(load_corpus(dir + "/a.txt") == c);
}

TEST_CASE("empty or missing corpus is an error") {
  const std::string dir = testing::temp_dir("data_empty");
  try {
    load_corpus(write_file(dir, "e.txt", ""));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
  }
  CHECK_THROWS_AS(load_corpus(write_file(dir, "w.txt", "\n \n\t\n")), Error);
  try {
    load_corpus(dir + "/missing.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("a directory is read in name order") {
  const std::string dir = testing::temp_dir("data_dir");
  write_file(dir, "2.txt", "two");
  write_file(dir, "1.txt", "one\n\nuno");
  CHECK(load_corpus(dir).documents == std::vector<std::string>{"one", "uno", "two"});
}

TEST_CASE("validation split takes the last documents") {
  const Corpus c = Corpus::from_documents({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k"});
  const CorpusSplit s = split_validation(c, 0.1);
  CHECK(s.validation.documents == std::vector<std::string>{"j", "k"});
  CHECK(s.train.documents.size() == 9);
  CHECK(split_validation(c, 0.01).validation.documents.size() == 1);
  CHECK_THROWS_AS(split_validation(Corpus::from_documents({"a"}), 0.5), Error);
}

TEST_CASE("iid sharding examples") {
  const Corpus c = testing::synthetic_corpus(4, 1);
  const auto one = shard_iid(c, 1, 3);
  REQUIRE(one.size() == 1);
  CHECK(one[0].doc_indices == std::vector<std::size_t>{0, 1, 2, 3});
  const auto two = shard_iid(c, 2, 3);
  CHECK(two[0].doc_indices.size() == 2);
  CHECK(two[1].doc_indices.size() == 2);
  CHECK(shard_iid(c, 2, 3) == two);
  CHECK_THROWS_AS(shard_iid(c, 5, 3), Error);
}

TEST_CASE("iid sharding is a seeded random partition") {
  const Corpus c = testing::synthetic_corpus(60, 2);
  CHECK_FALSE(shard_iid(c, 3, 1) == shard_iid(c, 3, 2));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Corpus r = testing::synthetic_corpus(5 + seed * 3, seed);
    const std::size_t k = 1 + seed % 5;
    const auto shards = shard_iid(r, k, seed);
    REQUIRE(shards.size() == k);
    check_partition(shards, r);
    for (const Shard& s : shards) {
      CHECK(s.doc_indices.size() >= r.documents.size() / k);
      CHECK(s.doc_indices.size() <= r.documents.size() / k + 1);
    }
  }
}

TEST_CASE("non-iid sharding separates distinct byte distributions") {
  std::vector<std::string> docs;
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    std::string d;
    for (int j = 0; j < 50; ++j) {
      d += i % 2 ? char('0' + rng.below(10)) : char('a' + rng.below(26));
    }
    docs.push_back(d);
  }
  const Corpus c = Corpus::from_documents(docs);
  const auto shards = shard_noniid(c, 2, 9);
  REQUIRE(shards.size() == 2);
  check_partition(shards, c);
  for (const Shard& s : shards) {
    REQUIRE_FALSE(s.doc_indices.empty());
    const bool digits = s.doc_indices.front() % 2 == 1;
    for (std::size_t d : s.doc_indices) CHECK((d % 2 == 1) == digits);
  }
  const auto all = shard_noniid(c, 1, 9);
  CHECK(all[0].doc_indices.size() == 20);
}

TEST_CASE("non-iid sharding is always a partition with no empty shard") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const Corpus r = testing::synthetic_corpus(8 + seed * 2, seed + 40);
    const std::size_t k = 1 + seed % 6;
    const auto shards = shard_noniid(r, k, seed, 30);
    REQUIRE(shards.size() == k);
    check_partition(shards, r);
    for (const Shard& s : shards) CHECK_FALSE(s.doc_indices.empty());
  }
  CHECK_THROWS_AS(shard_noniid(testing::synthetic_corpus(3, 1), 4, 1), Error);
}

TEST_CASE("byte histograms are L2-normalized") {
  const auto h = byte_histogram("aab");
  CHECK(h.size() == 256);
  CHECK(h['a'] == doctest::Approx(2 / std::sqrt(5.0)).epsilon(1e-15));
  CHECK(h['b'] == doctest::Approx(1 / std::sqrt(5.0)).epsilon(1e-15));
}

TEST_CASE("kmeans with one cluster per point has zero cost") {
  std::vector<std::vector<double>> f;
  for (int i = 0; i < 6; ++i) f.push_back({double(i), double(i * i)});
  const auto r = kmeans(f, 6, 10, 1);
  CHECK(r.objective.back() == 0.0);
  CHECK(std::set<std::size_t>(r.assignments.begin(), r.assignments.end()).size() == 6);
}

TEST_CASE("kmeans recovers planted clusters") {
  Rng rng(8);
  std::vector<std::vector<double>> f;
  std::vector<int> truth;
  for (int i = 0; i < 100; ++i) {
    const int c = i % 2;
    f.push_back({c * 10.0 + rng.uniform(-1, 1), -c * 10.0 + rng.uniform(-1, 1),
                 rng.uniform(-1, 1)});
    truth.push_back(c);
  }
  const auto r = kmeans(f, 2, 50, 3);
  for (int i = 0; i < 100; ++i) {
    CHECK((r.assignments[i] == r.assignments[0]) == (truth[i] == truth[0]));
  }
}

TEST_CASE("kmeans objective never increases") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> f;
    for (int i = 0; i < 80; ++i) f.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
    const auto r = kmeans(f, 5, 50, seed);
    for (std::size_t i = 1; i < r.objective.size(); ++i) {
      CHECK(r.objective[i] <= r.objective[i - 1] + 1e-12);
    }
  }
}

TEST_CASE("kmeans tolerates duplicate points") {
  std::vector<std::vector<double>> f(10, std::vector<double>{1.0, 1.0});
  f.push_back({5.0, 5.0});
  const auto r = kmeans(f, 3, 20, 1);
  CHECK(r.assignments.size() == 11);
  std::vector<int> counts(3, 0);
  for (auto a : r.assignments) counts[a] += 1;
  for (int c : counts) CHECK(c > 0);
}

TEST_CASE("sampling a single eligible position") {
  const Corpus c = Corpus::from_documents({"ab"});
  Rng rng(1);
  const Batch b = sample_batch(c, full_shard(c), 3, 1, rng);
  CHECK(b.contexts == std::vector<std::uint32_t>{'a', 'a', 'a'});
  CHECK(b.targets == std::vector<std::uint32_t>{'b', 'b', 'b'});
}

TEST_CASE("sampling is reproducible from the rng state") {
  const Corpus c = testing::synthetic_corpus(10, 5);
  const ShardSampler s(c, full_shard(c), 4);
  Rng a(42), b(42);
  const Batch x = s.sample(16, a), y = s.sample(16, b);
  CHECK(x.contexts == y.contexts);
  CHECK(x.targets == y.targets);
}

TEST_CASE("documents are drawn in proportion to eligible positions") {
  // C = 2: "abcde" has 3 eligible positions, "xyz" has 1.
  const Corpus c = Corpus::from_documents({"abcde", "xyz"});
  const ShardSampler s(c, full_shard(c), 2);
  CHECK(s.eligible_positions() == 4);
  Rng rng(2024);
  const Batch b = s.sample(10000, rng);
  std::size_t first = 0;
  for (std::uint32_t t : b.targets) first += (t == 'c' || t == 'd' || t == 'e');
  const double n = 10000, p = 0.75;
  const double sigma = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(double(first) - n * p) < 3 * sigma);
}

TEST_CASE("short documents stay in shards but are never sampled") {
  const Corpus c = Corpus::from_documents({"ab", "hello world"});
  const Shard s = full_shard(c);
  CHECK(s.doc_indices.size() == 2);
  const ShardSampler sampler(c, s, 4);
  Rng rng(1);
  const Batch b = sampler.sample(200, rng);
  for (std::uint32_t t : b.targets) CHECK(t != 'b');
  CHECK_THROWS_AS(ShardSampler(Corpus::from_documents({"ab"}), full_shard(Corpus::from_documents({"ab"})), 4),
                  Error);
}

}  // TEST_SUITE
