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

#ifndef DILOCO_COMPRESSION_HPP_
#define DILOCO_COMPRESSION_HPP_

#include <span>

#include "model.hpp"
#include "numerics.hpp"

namespace diloco {

// Per-neuron sign pruning of an outer gradient. Inside each group:
//   1. the sign with the larger total magnitude wins (ties go to +) and
//      every element of the other sign is zeroed;
//   2. surviving elements are zeroed smallest-magnitude first (lower index
//      first on ties) until at least ceil(frac * group size) are zero.
// Elements that survive keep their exact value. frac must lie in [0, 1).
ParamVector prune_outer_gradient(const ParamVector& delta, double frac,
                                 std::span<const NeuronGroup> groups);

}  // namespace diloco

#endif  // DILOCO_COMPRESSION_HPP_
