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

#include "mpq/layers.h"

#include <set>

#include "mpq/error.h"

namespace mpq {
namespace {

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::kConvIn, "conv_in"},
    {LayerKind::kConv, "conv"},
    {LayerKind::kConvOut, "conv_out"},
    {LayerKind::kSelfAttn, "self_attn"},
    {LayerKind::kCrossAttnToQ, "cross_attn_to_q"},
    {LayerKind::kCrossAttnToK, "cross_attn_to_k"},
    {LayerKind::kCrossAttnToV, "cross_attn_to_v"},
    {LayerKind::kCrossAttnToOut, "cross_attn_to_out"},
    {LayerKind::kFfn, "ffn"},
    {LayerKind::kTimeEmbed, "time_embed"},
};

}  // namespace

LayerGroup GroupOf(LayerKind kind) {
  switch (kind) {
    case LayerKind::kCrossAttnToQ:
    case LayerKind::kCrossAttnToK:
    case LayerKind::kCrossAttnToV:
    case LayerKind::kCrossAttnToOut:
    case LayerKind::kFfn:
      return LayerGroup::kContent;
    default:
      return LayerGroup::kQuality;
  }
}

const char* LayerKindName(LayerKind kind) {
  for (const auto& entry : kKindNames) {
    if (entry.kind == kind) return entry.name;
  }
  return "unknown";
}

LayerKind ParseLayerKind(const std::string& name) {
  for (const auto& entry : kKindNames) {
    if (name == entry.name) return entry.kind;
  }
  throw Error(ErrorCode::kValidation, "unknown layer kind '" + name + "'");
}

const char* LayerGroupName(LayerGroup group) {
  return group == LayerGroup::kContent ? "content" : "quality";
}

LayerGroup ParseLayerGroup(const std::string& name) {
  if (name == "content") return LayerGroup::kContent;
  if (name == "quality") return LayerGroup::kQuality;
  throw Error(ErrorCode::kValidation, "unknown layer group '" + name + "'");
}

nlohmann::ordered_json LayerCostToJson(const LayerCost& cost) {
  nlohmann::ordered_json j;
  j["id"] = cost.id;
  j["kind"] = LayerKindName(cost.kind);
  j["group"] = LayerGroupName(cost.group);
  j["param_count"] = cost.param_count;
  j["act_elem_count"] = cost.act_elem_count;
  j["mac_count"] = cost.mac_count;
  return j;
}

LayerCost LayerCostFromJson(const nlohmann::json& j) {
  LayerCost cost;
  try {
    cost.id = j.at("id").get<std::string>();
    cost.kind = ParseLayerKind(j.at("kind").get<std::string>());
    cost.group = ParseLayerGroup(j.at("group").get<std::string>());
    cost.param_count = j.at("param_count").get<int64_t>();
    cost.act_elem_count = j.at("act_elem_count").get<int64_t>();
    cost.mac_count = j.at("mac_count").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                std::string("malformed layer entry: ") + e.what());
  }
  if (cost.group != GroupOf(cost.kind)) {
    throw Error(ErrorCode::kValidation,
                "layer " + cost.id + " has group inconsistent with its kind");
  }
  if (cost.param_count <= 0 || cost.act_elem_count <= 0 ||
      cost.mac_count <= 0) {
    throw Error(ErrorCode::kValidation,
                "layer " + cost.id + " has non-positive cost fields");
  }
  return cost;
}

std::vector<LayerCost> LayerCostsFromModelJson(const nlohmann::json& model) {
  if (!model.contains("layers") || !model["layers"].is_array()) {
    throw Error(ErrorCode::kValidation, "model description has no layer list");
  }
  std::vector<LayerCost> costs;
  std::set<std::string> seen;
  for (const auto& entry : model["layers"]) {
    costs.push_back(LayerCostFromJson(entry));
    if (!seen.insert(costs.back().id).second) {
      throw Error(ErrorCode::kValidation,
                  "duplicate layer id " + costs.back().id);
    }
  }
  return costs;
}

bool IsConfigBitWidth(int bits) {
  return bits == 2 || bits == 4 || bits == 8 || bits == kFpBits;
}

QuantConfig QuantConfig::AllFp(const std::vector<std::string>& layer_ids) {
  return Uniform(layer_ids, kFpBits, kFpBits);
}

QuantConfig QuantConfig::Uniform(const std::vector<std::string>& layer_ids,
                                 int weight_bits, int act_bits) {
  std::map<std::string, LayerBits> bits;
  for (const auto& id : layer_ids) bits[id] = {weight_bits, act_bits};
  QuantConfig config(std::move(bits));
  config.Validate(layer_ids);
  return config;
}

void QuantConfig::Validate(const std::vector<std::string>& layer_ids) const {
  for (const auto& id : layer_ids) {
    if (!bits_.count(id)) {
      throw Error(ErrorCode::kConfig, "config is missing layer " + id);
    }
  }
  if (bits_.size() != std::set<std::string>(layer_ids.begin(),
                                            layer_ids.end()).size()) {
    throw Error(ErrorCode::kConfig, "config names layers the model lacks");
  }
  for (const auto& [id, b] : bits_) {
    if (!IsConfigBitWidth(b.weight_bits) || !IsConfigBitWidth(b.act_bits)) {
      throw Error(ErrorCode::kConfig, "layer " + id + " has bit width outside "
                                      "{2,4,8,FP}");
    }
  }
}

const LayerBits& QuantConfig::at(const std::string& id) const {
  auto it = bits_.find(id);
  if (it == bits_.end()) {
    throw Error(ErrorCode::kConfig, "config is missing layer " + id);
  }
  return it->second;
}

}  // namespace mpq
