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


// Stage drivers shared by the command line tool: artifact I/O for inputs,
// reports and manifests, the proxy scorer used by the allocator, and one
// function per pipeline stage.

#ifndef MPQ_PIPELINE_H_
#define MPQ_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpq/allocator.h"
#include "mpq/sensitivity.h"
#include "mpq/toy_model.h"

namespace mpq {

namespace fs = std::filesystem;

// ----- Input sets -----

// Writes `json_path` and a sibling `<stem>.bin` holding latent and embedding
// containers for every input.
void SaveInputs(const std::vector<ModelInput>& inputs, const fs::path& json_path);

// Loads and checksum-validates an input set. With `spec`, shapes must match.
std::vector<ModelInput> LoadInputs(const fs::path& json_path,
                                   const ModelSpec* spec = nullptr);

// ----- Proxy scoring -----

inline constexpr size_t kProxyInputs = 8;

// Mean output SQNR of the model with one tensor kind quantized per a bit
// assignment (absent layers and the other kind stay FP). References and
// activation ranges are computed once.
class ProxyEvaluator {
 public:
  ProxyEvaluator(const Model& model, std::vector<ModelInput> inputs,
                 bool bos_aware);

  double Score(TensorKind kind, const std::map<std::string, int>& bits) const;
  double Score(const QuantConfig& config) const;
  ProxyScore AsProxy() const;

 private:
  const Model& model_;
  std::vector<ModelInput> inputs_;
  std::vector<Tensor> references_;
  ActivationStats stats_;
  bool bos_aware_;
};

// ----- Evaluation -----

struct MetricPair {
  double ssim = 0.0;
  double sqnr_db = 0.0;
};

struct EvaluationReport {
  size_t n_inputs = 0;
  bool bos_aware = false;
  MetricPair quantized;
  MetricPair fp_baseline;
  MetricPair delta;  // quantized - fp_baseline
  CostSummary summary;
};

// Output SSIM and SQNR against the FP network, averaged over `inputs`.
// Activation ranges are calibrated on the same inputs.
EvaluationReport Evaluate(const Model& model,
                          const std::vector<ModelInput>& inputs,
                          const QuantConfig& config, bool bos_aware);

std::string ReportToJson(const EvaluationReport& report);
std::string ReportToCsv(const EvaluationReport& report);

// ----- Stages -----

void RunGenModel(const ModelSpec& spec, const fs::path& out_dir);

void RunGenInputs(const fs::path& model_json, uint64_t seed, size_t count,
                  const fs::path& out_json);

struct SensitivityRunOptions {
  std::vector<TensorKind> kinds = {TensorKind::kWeight,
                                   TensorKind::kActivation};
  std::vector<int> bit_widths = {2, 4, 8};
  bool bos_aware = false;
  int jobs = 1;
};

// Writes the table as JSON lines after validating coverage.
SensitivityTable RunSensitivity(const fs::path& model_json,
                                const fs::path& inputs_json,
                                const SensitivityRunOptions& options,
                                const fs::path& out_path);

struct AllocateRunOptions {
  AllocationTarget target;
  AllocateOptions allocate;
  int grid_points = 20;
  double grid_lo_bits = 3.0;
  double grid_hi_bits = 8.0;
  bool bos_aware = false;
};

// Writes out_dir/config.json, out_dir/frontier.csv and one config per
// frontier point under out_dir/frontier/. The proxy uses the first
// kProxyInputs inputs.
BitWidthConfig RunAllocate(const fs::path& model_json,
                           const fs::path& table_path,
                           const fs::path& inputs_json,
                           const AllocateRunOptions& options,
                           const fs::path& out_dir);

enum class ReportFormat { kJson, kCsv };

ReportFormat ParseReportFormat(const std::string& name);

EvaluationReport RunEvaluate(const fs::path& model_json,
                             const fs::path& inputs_json,
                             const fs::path& config_json, bool bos_aware,
                             ReportFormat format, const fs::path& out_path);

// ----- Manifest -----

struct PipelineManifest {
  fs::path out_dir;
  ModelSpec model;
  uint64_t inputs_seed = 1;
  size_t inputs_count = 32;
  SensitivityRunOptions sensitivity;
  AllocateRunOptions allocate;
  ReportFormat report_format = ReportFormat::kJson;
};

// Relative out_dir values resolve against the manifest's directory.
PipelineManifest ParseManifest(const fs::path& manifest_path);

// Runs gen-model, gen-inputs, sensitivity, allocate and evaluate into
// out_dir, then writes out_dir/checksums.json listing every artifact.
void RunPipeline(const PipelineManifest& manifest);

}  // namespace mpq

#endif  // MPQ_PIPELINE_H_
