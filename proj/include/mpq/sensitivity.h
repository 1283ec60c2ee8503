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

// One-layer-at-a-time sensitivity analysis. Each probe quantizes a single
// tensor of a single layer and compares the network output against the FP
// output: content layers are scored with SSIM, quality layers with SQNR.

#ifndef MPQ_SENSITIVITY_H_
#define MPQ_SENSITIVITY_H_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpq/metrics.h"
#include "mpq/quantizer.h"
#include "mpq/toy_model.h"

namespace mpq {

struct SensitivityEntry {
  std::string layer_id;
  TensorKind tensor_kind = TensorKind::kWeight;
  int bit_width = 8;
  double score = 0.0;
  MetricKind metric_kind = MetricKind::kSsim;
  int n_inputs = 0;

  bool operator==(const SensitivityEntry&) const = default;
};

class SensitivityTable {
 public:
  SensitivityTable() = default;
  explicit SensitivityTable(std::vector<SensitivityEntry> entries);

  const std::vector<SensitivityEntry>& entries() const { return entries_; }
  void Append(const SensitivityTable& other);

  // Throws kValidation if absent.
  const SensitivityEntry& Find(const std::string& layer_id, TensorKind kind,
                               int bit_width) const;
  const SensitivityEntry* TryFind(const std::string& layer_id, TensorKind kind,
                                  int bit_width) const;

  std::vector<std::string> LayerIds(TensorKind kind) const;
  std::vector<int> BitWidths(TensorKind kind) const;
  bool HasKind(TensorKind kind) const;

  // Checks one entry per (layer, kind, bits) and that every model layer is
  // covered for each kind present. With `enforce_metric`, also that content
  // layers carry SSIM and quality layers SQNR.
  void Validate(const std::vector<LayerCost>& layers,
                bool enforce_metric = true) const;

  // JSON lines, one entry per line, fields as in SensitivityEntry.
  std::string ToJsonLines() const;
  static SensitivityTable FromJsonLines(const std::string& text);

 private:
  std::vector<SensitivityEntry> entries_;
};

struct ProbeEvent {
  const QuantConfig* config = nullptr;
  size_t input_index = 0;
  const Tensor* reference = nullptr;
};

struct AnalyzeOptions {
  std::vector<int> bit_widths = {2, 4, 8};
  TensorKind tensor_kind = TensorKind::kWeight;
  bool bos_aware = false;
  // Forces one metric for every layer instead of the group metric.
  std::optional<MetricKind> metric_override;
  double sqnr_cap_db = kDefaultSqnrCapDb;
  // Activation ranges; calibrated from the analysis inputs when null.
  const ActivationStats* act_stats = nullptr;
  // Worker threads for independent probes. Results do not depend on it.
  int jobs = 1;
  // Invoked for every probe forward pass (serialized).
  std::function<void(const ProbeEvent&)> probe_hook;
};

SensitivityTable Analyze(const Model& model,
                         const std::vector<ModelInput>& inputs,
                         const AnalyzeOptions& options);

struct RankedLayer {
  std::string layer_id;
  TensorKind tensor_kind = TensorKind::kWeight;
  double score = 0.0;
};

// Layers sorted ascending by their score at the lowest probed bit width,
// ties broken by layer id. Restricted to one tensor kind when given.
std::vector<RankedLayer> RankLongTail(
    const SensitivityTable& table,
    std::optional<TensorKind> kind = std::nullopt);

}  // namespace mpq

#endif  // MPQ_SENSITIVITY_H_
