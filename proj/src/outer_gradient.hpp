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

#ifndef DILOCO_OUTER_GRADIENT_HPP_
#define DILOCO_OUTER_GRADIENT_HPP_

#include <cstddef>
#include <cstdint>

#include "numerics.hpp"

namespace diloco {

// A worker's displacement over one inner phase: phase_start - local_params.
struct OuterGradient {
  std::uint32_t worker_id = 0;
  std::uint32_t outer_step = 0;
  ParamVector delta;
  std::size_t shard_tokens = 0;
};

}  // namespace diloco

#endif  // DILOCO_OUTER_GRADIENT_HPP_
