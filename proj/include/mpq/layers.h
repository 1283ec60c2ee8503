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

// Layer taxonomy shared by the model, the sensitivity pass and the allocator.

#ifndef MPQ_LAYERS_H_
#define MPQ_LAYERS_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace mpq {

// Bit width recorded for a tensor that stays in floating point. Cost
// accounting charges such tensors at 16 bits.
inline constexpr int kFpBits = 16;

enum class LayerKind {
  kConvIn,
  kConv,
  kConvOut,
  kSelfAttn,
  kCrossAttnToQ,
  kCrossAttnToK,
  kCrossAttnToV,
  kCrossAttnToOut,
  kFfn,
  kTimeEmbed,
};

inline constexpr LayerKind kAllLayerKinds[] = {
    LayerKind::kConvIn,       LayerKind::kConv,         LayerKind::kConvOut,
    LayerKind::kSelfAttn,     LayerKind::kCrossAttnToQ, LayerKind::kCrossAttnToK,
    LayerKind::kCrossAttnToV, LayerKind::kCrossAttnToOut, LayerKind::kFfn,
    LayerKind::kTimeEmbed,
};

// Content layers steer what the image shows; everything else affects how
// clean it looks.
enum class LayerGroup { kContent, kQuality };

LayerGroup GroupOf(LayerKind kind);

const char* LayerKindName(LayerKind kind);
LayerKind ParseLayerKind(const std::string& name);
const char* LayerGroupName(LayerGroup group);
LayerGroup ParseLayerGroup(const std::string& name);

// What the allocator needs to know about a layer.
struct LayerCost {
  std::string id;
  LayerKind kind = LayerKind::kConv;
  LayerGroup group = LayerGroup::kQuality;
  int64_t param_count = 0;
  int64_t act_elem_count = 0;
  int64_t mac_count = 0;
};

nlohmann::ordered_json LayerCostToJson(const LayerCost& cost);
LayerCost LayerCostFromJson(const nlohmann::json& j);

// Reads the "layers" array of a model description.
std::vector<LayerCost> LayerCostsFromModelJson(const nlohmann::json& model);

struct LayerBits {
  int weight_bits = kFpBits;
  int act_bits = kFpBits;
  bool operator==(const LayerBits&) const = default;
};

// Per-layer weight and activation bit widths. kFpBits marks a tensor that
// is left unquantized.
class QuantConfig {
 public:
  QuantConfig() = default;
  explicit QuantConfig(std::map<std::string, LayerBits> bits)
      : bits_(std::move(bits)) {}

  static QuantConfig AllFp(const std::vector<std::string>& layer_ids);
  static QuantConfig Uniform(const std::vector<std::string>& layer_ids,
                             int weight_bits, int act_bits);

  // Throws kConfig when the key set differs from `layer_ids` or a bit width
  // is not one of {2, 4, 8, kFpBits}.
  void Validate(const std::vector<std::string>& layer_ids) const;

  const LayerBits& at(const std::string& id) const;
  LayerBits& operator[](const std::string& id) { return bits_[id]; }
  const std::map<std::string, LayerBits>& bits() const { return bits_; }
  bool empty() const { return bits_.empty(); }

  bool operator==(const QuantConfig&) const = default;

 private:
  std::map<std::string, LayerBits> bits_;
};

bool IsConfigBitWidth(int bits);

}  // namespace mpq

#endif  // MPQ_LAYERS_H_
