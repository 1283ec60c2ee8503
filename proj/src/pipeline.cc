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

#include "mpq/pipeline.h"

#include <algorithm>
#include <cstdio>

#include "mpq/error.h"
#include "mpq/metrics.h"
#include "mpq/tensor_io.h"

namespace mpq {
namespace {

constexpr char kInputsFormat[] = "mpq-inputs-v1";
constexpr char kReportFormat[] = "mpq-report-v1";

nlohmann::json ParseJsonFile(const fs::path& path) {
  const std::string text = ReadFileBytes(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                "cannot parse " + path.string() + ": " + e.what());
  }
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  WriteFileBytes(path, text);
}

std::string FormatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::string> Ids(const Model& model) { return model.layer_ids(); }

QuantConfig ConfigFor(const Model& model, TensorKind kind,
                      const std::map<std::string, int>& bits) {
  QuantConfig config = QuantConfig::AllFp(Ids(model));
  for (const auto& [id, b] : bits) {
    if (kind == TensorKind::kWeight) {
      config[id].weight_bits = b;
    } else {
      config[id].act_bits = b;
    }
  }
  return config;
}

BitWidthConfig LoadConfig(const fs::path& path) {
  return BitWidthConfigFromJson(ParseJsonFile(path));
}

std::vector<ModelInput> Head(const std::vector<ModelInput>& inputs, size_t n) {
  return {inputs.begin(),
          inputs.begin() + static_cast<std::ptrdiff_t>(std::min(n, inputs.size()))};
}

nlohmann::ordered_json MetricsJson(const MetricPair& m) {
  return {{"ssim", m.ssim}, {"sqnr_db", m.sqnr_db}};
}

}  // namespace

void SaveInputs(const std::vector<ModelInput>& inputs,
                const fs::path& json_path) {
  std::string bytes;
  nlohmann::ordered_json timesteps = nlohmann::ordered_json::array();
  for (const auto& in : inputs) {
    bytes += EncodeTensor(in.latent);
    bytes += EncodeTensor(in.embedding);
    timesteps.push_back(in.timestep);
  }
  fs::path data = json_path;
  data.replace_extension(".bin");
  WriteText(data, bytes);
  nlohmann::ordered_json j;
  j["format"] = kInputsFormat;
  j["count"] = inputs.size();
  j["data_file"] = data.filename().string();
  j["sha256"] = Sha256Hex(bytes);
  j["timesteps"] = std::move(timesteps);
  WriteText(json_path, j.dump(2) + "\n");
}

std::vector<ModelInput> LoadInputs(const fs::path& json_path,
                                   const ModelSpec* spec) {
  const nlohmann::json j = ParseJsonFile(json_path);
  size_t count = 0;
  std::string data_file, sha;
  std::vector<double> timesteps;
  try {
    if (j.at("format").get<std::string>() != kInputsFormat) {
      throw Error(ErrorCode::kValidation, "unsupported input set format");
    }
    count = j.at("count").get<size_t>();
    data_file = j.at("data_file").get<std::string>();
    sha = j.at("sha256").get<std::string>();
    timesteps = j.at("timesteps").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                std::string("malformed input set: ") + e.what());
  }
  if (timesteps.size() != count || count == 0) {
    throw Error(ErrorCode::kValidation, "input set count mismatch");
  }
  const std::string bytes = ReadFileBytes(json_path.parent_path() / data_file);
  if (Sha256Hex(bytes) != sha) {
    throw Error(ErrorCode::kValidation,
                "checksum mismatch for " + data_file);
  }
  std::vector<ModelInput> inputs;
  size_t offset = 0;
  try {
    for (size_t i = 0; i < count; ++i) {
      ModelInput in;
      in.latent = DecodeTensor(bytes, &offset);
      in.embedding = DecodeTensor(bytes, &offset);
      in.timestep = timesteps[i];
      inputs.push_back(std::move(in));
    }
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidation, std::string("bad input data: ") + e.what());
  }
  if (offset != bytes.size()) {
    throw Error(ErrorCode::kValidation, "trailing bytes in " + data_file);
  }
  if (spec) {
    const Shape latent{spec->latent_channels, spec->latent_size,
                       spec->latent_size};
    const Shape text{spec->tokens, spec->text_dim};
    for (const auto& in : inputs) {
      if (in.latent.shape() != latent || in.embedding.shape() != text) {
        throw Error(ErrorCode::kValidation,
                    "input shapes do not match the model");
      }
    }
  }
  return inputs;
}

ProxyEvaluator::ProxyEvaluator(const Model& model,
                               std::vector<ModelInput> inputs, bool bos_aware)
    : model_(model), inputs_(std::move(inputs)), bos_aware_(bos_aware) {
  if (inputs_.empty()) {
    throw Error(ErrorCode::kInvalidParameter, "proxy needs at least one input");
  }
  for (const auto& in : inputs_) references_.push_back(Forward(model_, in));
  stats_ = CalibrateActivations(model_, inputs_);
}

double ProxyEvaluator::Score(const QuantConfig& config) const {
  ForwardOptions options;
  options.config = &config;
  options.bos_aware = bos_aware_;
  options.act_stats = &stats_;
  BosCache cache;
  options.bos_cache = &cache;
  double total = 0.0;
  for (size_t i = 0; i < inputs_.size(); ++i) {
    total += SqnrDb(references_[i], Forward(model_, inputs_[i], options)).value;
  }
  return total / static_cast<double>(inputs_.size());
}

double ProxyEvaluator::Score(TensorKind kind,
                             const std::map<std::string, int>& bits) const {
  return Score(ConfigFor(model_, kind, bits));
}

ProxyScore ProxyEvaluator::AsProxy() const {
  return [this](TensorKind kind, const std::map<std::string, int>& bits) {
    return Score(kind, bits);
  };
}

EvaluationReport Evaluate(const Model& model,
                          const std::vector<ModelInput>& inputs,
                          const QuantConfig& config, bool bos_aware) {
  if (inputs.empty()) {
    throw Error(ErrorCode::kInvalidParameter, "evaluation needs inputs");
  }
  try {
    config.Validate(Ids(model));
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidation, e.what());
  }
  const ActivationStats stats = CalibrateActivations(model, inputs);
  const QuantConfig fp = QuantConfig::AllFp(Ids(model));

  auto measure = [&](const QuantConfig& c) {
    ForwardOptions options;
    options.config = &c;
    options.bos_aware = bos_aware;
    options.act_stats = &stats;
    BosCache cache;
    options.bos_cache = &cache;
    MetricPair m;
    for (const auto& in : inputs) {
      const Tensor ref = Forward(model, in);
      const Tensor out = Forward(model, in, options);
      m.ssim += SsimStabilized(ref, out).value;
      m.sqnr_db += SqnrDb(ref, out).value;
    }
    m.ssim /= static_cast<double>(inputs.size());
    m.sqnr_db /= static_cast<double>(inputs.size());
    return m;
  };

  EvaluationReport report;
  report.n_inputs = inputs.size();
  report.bos_aware = bos_aware;
  report.quantized = measure(config);
  report.fp_baseline = measure(fp);
  report.delta = {report.quantized.ssim - report.fp_baseline.ssim,
                  report.quantized.sqnr_db - report.fp_baseline.sqnr_db};
  report.summary = ComputeCostSummary(config, model.costs());
  return report;
}

std::string ReportToJson(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["format"] = kReportFormat;
  j["n_inputs"] = r.n_inputs;
  j["bos_aware"] = r.bos_aware;
  j["quantized"] = MetricsJson(r.quantized);
  j["fp_baseline"] = MetricsJson(r.fp_baseline);
  j["delta"] = MetricsJson(r.delta);
  j["summary"] = {{"avg_weight_bits", r.summary.avg_weight_bits},
                  {"avg_act_bits", r.summary.avg_act_bits},
                  {"storage_bits", r.summary.storage_bits},
                  {"bops", r.summary.bops},
                  {"storage_opt_ratio", r.summary.storage_opt_ratio},
                  {"compute_opt_ratio", r.summary.compute_opt_ratio}};
  return j.dump(2) + "\n";
}

std::string ReportToCsv(const EvaluationReport& r) {
  std::string out = "metric,value,fp_baseline,delta\n";
  out += "ssim," + FormatDouble(r.quantized.ssim) + "," +
         FormatDouble(r.fp_baseline.ssim) + "," + FormatDouble(r.delta.ssim) +
         "\n";
  out += "sqnr_db," + FormatDouble(r.quantized.sqnr_db) + "," +
         FormatDouble(r.fp_baseline.sqnr_db) + "," +
         FormatDouble(r.delta.sqnr_db) + "\n";
  return out;
}

void RunGenModel(const ModelSpec& spec, const fs::path& out_dir) {
  SaveModel(BuildToyUnet(spec), out_dir);
}

void RunGenInputs(const fs::path& model_json, uint64_t seed, size_t count,
                  const fs::path& out_json) {
  if (count == 0) {
    throw Error(ErrorCode::kInvalidParameter, "input count must be positive");
  }
  const Model model = LoadModel(model_json);
  SaveInputs(MakeInputs(model.spec(), RngSeed{seed}, count), out_json);
}

SensitivityTable RunSensitivity(const fs::path& model_json,
                                const fs::path& inputs_json,
                                const SensitivityRunOptions& options,
                                const fs::path& out_path) {
  const Model model = LoadModel(model_json);
  const std::vector<ModelInput> inputs = LoadInputs(inputs_json, &model.spec());
  SensitivityTable table;
  for (TensorKind kind : options.kinds) {
    AnalyzeOptions analyze;
    analyze.bit_widths = options.bit_widths;
    analyze.tensor_kind = kind;
    analyze.bos_aware = options.bos_aware;
    analyze.jobs = options.jobs;
    table.Append(Analyze(model, inputs, analyze));
  }
  table.Validate(model.costs());
  WriteText(out_path, table.ToJsonLines());
  return table;
}

BitWidthConfig RunAllocate(const fs::path& model_json,
                           const fs::path& table_path,
                           const fs::path& inputs_json,
                           const AllocateRunOptions& options,
                           const fs::path& out_dir) {
  const Model model = LoadModel(model_json);
  const std::vector<LayerCost> costs = model.costs();
  const SensitivityTable table =
      SensitivityTable::FromJsonLines(ReadFileBytes(table_path));
  table.Validate(costs, /*enforce_metric=*/false);
  const ProxyEvaluator proxy(
      model, Head(LoadInputs(inputs_json, &model.spec()), kProxyInputs),
      options.bos_aware);

  BitWidthConfig config =
      Allocate(table, costs, options.target, options.allocate, proxy.AsProxy());
  WriteText(out_dir / "config.json",
            BitWidthConfigToJson(config).dump(2) + "\n");

  const TensorKind kind = options.target.weight_bits ? TensorKind::kWeight
                                                     : TensorKind::kActivation;
  const std::vector<SweepCell> cells =
      SweepGrid(table, costs, kind, options.grid_lo_bits, options.grid_hi_bits,
                options.grid_points, proxy.AsProxy());
  std::vector<ParetoPoint> points;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].feasible) points.push_back({cells[i].avg_bits, cells[i].score, i});
  }
  std::error_code ec;
  fs::remove_all(out_dir / "frontier", ec);
  std::string csv = "avg_bits,score,config_path\n";
  int n = 0;
  for (const ParetoPoint& p : ParetoFrontier(points)) {
    BitWidthConfig point = config;
    for (const auto& [id, b] : cells[p.index].bits) {
      if (kind == TensorKind::kWeight) {
        point.bits[id].weight_bits = b;
      } else {
        point.bits[id].act_bits = b;
      }
    }
    point.fp_retained.clear();
    point.summary = ComputeCostSummary(point.bits, costs);
    point.score = p.score;
    char name[32];
    std::snprintf(name, sizeof(name), "point_%03d.json", n++);
    const std::string rel = std::string("frontier/") + name;
    WriteText(out_dir / rel, BitWidthConfigToJson(point).dump(2) + "\n");
    csv += FormatDouble(p.avg_bits) + "," + FormatDouble(p.score) + "," + rel +
           "\n";
  }
  WriteText(out_dir / "frontier.csv", csv);
  return config;
}

ReportFormat ParseReportFormat(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  throw Error(ErrorCode::kInvalidParameter, "unknown report format " + name);
}

EvaluationReport RunEvaluate(const fs::path& model_json,
                             const fs::path& inputs_json,
                             const fs::path& config_json, bool bos_aware,
                             ReportFormat format, const fs::path& out_path) {
  const Model model = LoadModel(model_json);
  const std::vector<ModelInput> inputs = LoadInputs(inputs_json, &model.spec());
  const BitWidthConfig config = LoadConfig(config_json);
  const EvaluationReport report =
      Evaluate(model, inputs, config.bits, bos_aware);
  WriteText(out_path, format == ReportFormat::kJson ? ReportToJson(report)
                                                    : ReportToCsv(report));
  return report;
}

PipelineManifest ParseManifest(const fs::path& manifest_path) {
  const nlohmann::json j = ParseJsonFile(manifest_path);
  PipelineManifest m;
  try {
    m.out_dir = j.at("out_dir").get<std::string>();
    if (m.out_dir.is_relative()) {
      m.out_dir = manifest_path.parent_path() / m.out_dir;
    }
    const auto model = j.value("model", nlohmann::json::object());
    m.model.seed = model.value("seed", m.model.seed);
    m.model.width = model.value("width", m.model.width);
    m.model.depth = model.value("depth", m.model.depth);
    const auto inputs = j.value("inputs", nlohmann::json::object());
    m.inputs_seed = inputs.value("seed", m.inputs_seed);
    m.inputs_count = inputs.value("count", m.inputs_count);
    const auto sens = j.value("sensitivity", nlohmann::json::object());
    if (sens.contains("kinds")) {
      m.sensitivity.kinds.clear();
      for (const auto& k : sens["kinds"]) {
        m.sensitivity.kinds.push_back(ParseTensorKind(k.get<std::string>()));
      }
    }
    m.sensitivity.bit_widths =
        sens.value("bits", m.sensitivity.bit_widths);
    m.sensitivity.bos_aware = sens.value("bos_aware", false);
    m.sensitivity.jobs = sens.value("jobs", 1);
    const auto alloc = j.value("allocate", nlohmann::json::object());
    if (alloc.contains("target_bits")) {
      m.allocate.target.weight_bits = alloc["target_bits"].get<double>();
    }
    if (alloc.contains("target_act_bits")) {
      m.allocate.target.act_bits = alloc["target_act_bits"].get<double>();
    }
    m.allocate.allocate.retain_fraction = alloc.value("retain_fp", 0.0);
    m.allocate.grid_points = alloc.value("grid_points", m.allocate.grid_points);
    m.allocate.bos_aware = m.sensitivity.bos_aware;
    const auto eval = j.value("evaluate", nlohmann::json::object());
    m.report_format = ParseReportFormat(eval.value("format", "json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                std::string("malformed manifest: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidation,
                std::string("invalid manifest: ") + e.what());
  }
  if (!m.allocate.target.weight_bits && !m.allocate.target.act_bits) {
    m.allocate.target.weight_bits = 4.0;
  }
  return m;
}

void RunPipeline(const PipelineManifest& m) {
  const fs::path out = m.out_dir;
  const fs::path model_json = out / "model" / "model.json";
  const fs::path inputs_json = out / "inputs" / "inputs.json";
  const fs::path table = out / "sensitivity.jsonl";
  const fs::path alloc_dir = out / "allocation";
  const fs::path report =
      out / (m.report_format == ReportFormat::kJson ? "report.json"
                                                    : "report.csv");
  std::error_code ec;
  fs::remove_all(out, ec);

  RunGenModel(m.model, out / "model");
  RunGenInputs(model_json, m.inputs_seed, m.inputs_count, inputs_json);
  RunSensitivity(model_json, inputs_json, m.sensitivity, table);
  RunAllocate(model_json, table, inputs_json, m.allocate, alloc_dir);
  RunEvaluate(model_json, inputs_json, alloc_dir / "config.json",
              m.allocate.bos_aware, m.report_format, report);

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json sums = nlohmann::ordered_json::object();
  for (const auto& f : files) {
    sums[fs::relative(f, out).generic_string()] = Sha256Hex(ReadFileBytes(f));
  }
  WriteText(out / "checksums.json", sums.dump(2) + "\n");
}

}  // namespace mpq
