// Copyright 2026 The mpq Authors
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

#ifndef MPQ_RNG_H_
#define MPQ_RNG_H_

#include <cstdint>
#include <string_view>

namespace mpq {

struct RngSeed {
  uint64_t value = 0;
};

// SplitMix64 (Steele, Lea & Flood 2014). Every random quantity in the
// toolkit is drawn from this generator so fixtures can be reproduced from
// any language that implements the same 64-bit mixing function.
//
// Gaussian samples use the basic Box-Muller transform, both outputs of a
// pair are returned in turn.
class SplitMix64 {
 public:
  explicit SplitMix64(RngSeed seed) : state_(seed.value) {}

  uint64_t NextU64();

  // Uniform in [0, 1) with 53 bits of resolution.
  double NextUniform();

  // Uniform integer in [0, bound). bound must be positive.
  uint64_t NextBelow(uint64_t bound);

  double NextGaussian();

  // Returns an independent generator whose stream is derived from this one
  // and the given salt. Does not advance this generator.
  SplitMix64 Split(uint64_t salt) const;

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable 64-bit mix of a string (FNV-1a folded through the SplitMix64
// finalizer); used to derive per-layer seeds from layer ids.
uint64_t HashLabel(std::string_view label);

}  // namespace mpq

#endif  // MPQ_RNG_H_
