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

#include "mpq/sensitivity.h"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "mpq/error.h"

namespace mpq {
namespace {

using EntryKey = std::tuple<std::string, TensorKind, int>;

struct Probe {
  size_t layer_index;
  int bits;
};

MetricKind GroupMetric(LayerGroup group) {
  return group == LayerGroup::kContent ? MetricKind::kSsim
                                       : MetricKind::kSqnrDb;
}

}  // namespace

SensitivityTable::SensitivityTable(std::vector<SensitivityEntry> entries)
    : entries_(std::move(entries)) {}

void SensitivityTable::Append(const SensitivityTable& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

const SensitivityEntry* SensitivityTable::TryFind(const std::string& layer_id,
                                                  TensorKind kind,
                                                  int bit_width) const {
  for (const auto& e : entries_) {
    if (e.layer_id == layer_id && e.tensor_kind == kind &&
        e.bit_width == bit_width) {
      return &e;
    }
  }
  return nullptr;
}

const SensitivityEntry& SensitivityTable::Find(const std::string& layer_id,
                                               TensorKind kind,
                                               int bit_width) const {
  const SensitivityEntry* e = TryFind(layer_id, kind, bit_width);
  if (!e) {
    throw Error(ErrorCode::kValidation,
                "sensitivity table has no entry for " + layer_id + " " +
                    TensorKindName(kind) + " " + std::to_string(bit_width) +
                    "-bit");
  }
  return *e;
}

std::vector<std::string> SensitivityTable::LayerIds(TensorKind kind) const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.tensor_kind == kind && seen.insert(e.layer_id).second) {
      ids.push_back(e.layer_id);
    }
  }
  return ids;
}

std::vector<int> SensitivityTable::BitWidths(TensorKind kind) const {
  std::set<int> bits;
  for (const auto& e : entries_) {
    if (e.tensor_kind == kind) bits.insert(e.bit_width);
  }
  return {bits.begin(), bits.end()};
}

bool SensitivityTable::HasKind(TensorKind kind) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [kind](const auto& e) { return e.tensor_kind == kind; });
}

void SensitivityTable::Validate(const std::vector<LayerCost>& layers,
                                bool enforce_metric) const {
  std::map<std::string, LayerGroup> groups;
  for (const auto& l : layers) groups[l.id] = l.group;

  std::set<EntryKey> keys;
  for (const auto& e : entries_) {
    auto it = groups.find(e.layer_id);
    if (it == groups.end()) {
      throw Error(ErrorCode::kValidation,
                  "table names unknown layer " + e.layer_id);
    }
    if (!IsSupportedBitWidth(e.bit_width)) {
      throw Error(ErrorCode::kValidation,
                  "table entry for " + e.layer_id + " has bit width " +
                      std::to_string(e.bit_width));
    }
    if (!keys.emplace(e.layer_id, e.tensor_kind, e.bit_width).second) {
      throw Error(ErrorCode::kValidation,
                  "duplicate table entry for " + e.layer_id);
    }
    if (enforce_metric && e.metric_kind != GroupMetric(it->second)) {
      throw Error(ErrorCode::kValidation,
                  "layer " + e.layer_id + " scored with the wrong metric");
    }
  }
  for (TensorKind kind : {TensorKind::kWeight, TensorKind::kActivation}) {
    if (!HasKind(kind)) continue;
    for (int bits : BitWidths(kind)) {
      for (const auto& l : layers) {
        if (!keys.count({l.id, kind, bits})) {
          throw Error(ErrorCode::kValidation,
                      "table misses " + l.id + " " + TensorKindName(kind) +
                          " " + std::to_string(bits) + "-bit");
        }
      }
    }
  }
}

std::string SensitivityTable::ToJsonLines() const {
  std::string out;
  for (const auto& e : entries_) {
    nlohmann::ordered_json j;
    j["layer_id"] = e.layer_id;
    j["tensor_kind"] = TensorKindName(e.tensor_kind);
    j["bit_width"] = e.bit_width;
    j["score"] = e.score;
    j["metric_kind"] = MetricKindName(e.metric_kind);
    j["n_inputs"] = e.n_inputs;
    out += j.dump();
    out += '\n';
  }
  return out;
}

SensitivityTable SensitivityTable::FromJsonLines(const std::string& text) {
  std::vector<SensitivityEntry> entries;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SensitivityEntry e;
      e.layer_id = j.at("layer_id").get<std::string>();
      e.tensor_kind = ParseTensorKind(j.at("tensor_kind").get<std::string>());
      e.bit_width = j.at("bit_width").get<int>();
      e.score = j.at("score").get<double>();
      e.metric_kind = ParseMetricKind(j.at("metric_kind").get<std::string>());
      e.n_inputs = j.at("n_inputs").get<int>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kValidation, "sensitivity table line " +
                                              std::to_string(line_no) + ": " +
                                              e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kValidation, "sensitivity table line " +
                                              std::to_string(line_no) + ": " +
                                              e.what());
    }
  }
  return SensitivityTable(std::move(entries));
}

SensitivityTable Analyze(const Model& model,
                         const std::vector<ModelInput>& inputs,
                         const AnalyzeOptions& options) {
  if (inputs.empty()) {
    throw Error(ErrorCode::kInvalidParameter,
                "sensitivity analysis needs at least one input");
  }
  if (options.bit_widths.empty()) {
    throw Error(ErrorCode::kInvalidParameter, "no bit widths to probe");
  }
  for (int bits : options.bit_widths) {
    if (!IsSupportedBitWidth(bits)) {
      throw Error(ErrorCode::kInvalidParameter,
                  "bit width " + std::to_string(bits) + " not in {2,4,8}");
    }
  }

  ActivationStats calibrated;
  const ActivationStats* stats = options.act_stats;
  if (!stats && options.tensor_kind == TensorKind::kActivation) {
    calibrated = CalibrateActivations(model, inputs);
    stats = &calibrated;
  }

  // FP references, computed once and shared by every probe.
  std::vector<Tensor> references;
  references.reserve(inputs.size());
  for (const auto& input : inputs) references.push_back(Forward(model, input));

  const std::vector<std::string> ids = model.layer_ids();
  std::vector<Probe> probes;
  for (size_t i = 0; i < ids.size(); ++i) {
    for (int bits : options.bit_widths) probes.push_back({i, bits});
  }

  BosCache bos_cache;
  std::mutex hook_mu;
  std::vector<SensitivityEntry> results(probes.size());
  auto run_probe = [&](size_t p) {
    const LayerDescriptor& layer = model.layers()[probes[p].layer_index];
    QuantConfig config = QuantConfig::AllFp(ids);
    if (options.tensor_kind == TensorKind::kWeight) {
      config[layer.id].weight_bits = probes[p].bits;
    } else {
      config[layer.id].act_bits = probes[p].bits;
    }
    ForwardOptions fwd;
    fwd.config = &config;
    fwd.bos_aware = options.bos_aware;
    fwd.act_stats = stats;
    fwd.bos_cache = &bos_cache;

    const MetricKind metric =
        options.metric_override.value_or(GroupMetric(layer.group));
    double total = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
      if (options.probe_hook) {
        std::lock_guard<std::mutex> lock(hook_mu);
        options.probe_hook(ProbeEvent{&config, i, &references[i]});
      }
      const Tensor out = Forward(model, inputs[i], fwd);
      total += metric == MetricKind::kSsim
                   ? SsimStabilized(references[i], out).value
                   : SqnrDb(references[i], out, options.sqnr_cap_db).value;
    }
    results[p] = SensitivityEntry{layer.id,
                                  options.tensor_kind,
                                  probes[p].bits,
                                  total / static_cast<double>(inputs.size()),
                                  metric,
                                  static_cast<int>(inputs.size())};
  };

  const size_t jobs =
      std::clamp<size_t>(static_cast<size_t>(std::max(options.jobs, 1)), 1,
                         probes.size());
  if (jobs == 1) {
    for (size_t p = 0; p < probes.size(); ++p) run_probe(p);
  } else {
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> workers;
    for (size_t t = 0; t < jobs; ++t) {
      workers.emplace_back([&] {
        for (size_t p; (p = next.fetch_add(1)) < probes.size();) {
          try {
            run_probe(p);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }
  return SensitivityTable(std::move(results));
}

std::vector<RankedLayer> RankLongTail(const SensitivityTable& table,
                                      std::optional<TensorKind> kind) {
  std::vector<RankedLayer> ranked;
  for (TensorKind k : {TensorKind::kWeight, TensorKind::kActivation}) {
    if (kind && *kind != k) continue;
    const std::vector<int> bits = table.BitWidths(k);
    if (bits.empty()) continue;
    for (const auto& id : table.LayerIds(k)) {
      ranked.push_back({id, k, table.Find(id, k, bits.front()).score});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedLayer& a, const RankedLayer& b) {
                     if (a.score != b.score) return a.score < b.score;
                     if (a.layer_id != b.layer_id) return a.layer_id < b.layer_id;
                     return a.tensor_kind < b.tensor_kind;
                   });
  return ranked;
}

}  // namespace mpq
