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

#ifndef DILOCO_RNG_HPP_
#define DILOCO_RNG_HPP_

#include <cstdint>
#include <random>

namespace diloco {

// Every random stream in a run is derived from the master seed plus a
// (purpose, a, b) key, so adding or removing workers never shifts another
// worker's stream.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kPretrain = 2,
  kShard = 3,
  kKMeans = 4,
  kBatch = 5,  // a = worker id, b = outer step
  kDrop = 6,   // a = outer step
  kEval = 7,
  kTest = 99,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ static_cast<std::uint64_t>(purpose));
  s = splitmix64(s ^ a);
  return splitmix64(s ^ (b * 0x2545f4914f6cdd1dULL));
}

// mt19937_64 is fully specified by the standard; the helpers below avoid
// std::*_distribution so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, StreamPurpose purpose, std::uint64_t a = 0,
      std::uint64_t b = 0)
      : engine_(derive_seed(master, purpose, a, b)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace diloco

#endif  // DILOCO_RNG_HPP_
