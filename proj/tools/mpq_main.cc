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

// Command line driver for the mixed-precision quantization pipeline.
//
// Exit status: 0 success, 2 usage, 3 validation, 4 infeasible, 5 I/O.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpq/error.h"
#include "mpq/pipeline.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitInfeasible = 4;
constexpr int kExitIo = 5;

int ExitCodeFor(mpq::ErrorCode code) {
  switch (code) {
    case mpq::ErrorCode::kInvalidParameter:
      return kExitUsage;
    case mpq::ErrorCode::kInfeasible:
      return kExitInfeasible;
    case mpq::ErrorCode::kIo:
      return kExitIo;
    default:
      return kExitValidation;
  }
}

std::vector<mpq::TensorKind> KindsFromFlag(const std::string& flag) {
  if (flag == "both") {
    return {mpq::TensorKind::kWeight, mpq::TensorKind::kActivation};
  }
  return {mpq::ParseTensorKind(flag)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-precision post-training quantization toolkit"};
  app.require_subcommand(1);

  // gen-model
  mpq::ModelSpec spec;
  std::string model_out;
  auto* gen_model = app.add_subcommand("gen-model", "Build the toy UNet");
  gen_model->add_option("--seed", spec.seed, "Weight seed");
  gen_model->add_option("--width", spec.width, "Base channel count")
      ->check(CLI::Range(mpq::ModelSpec::kMinWidth, size_t{4096}));
  gen_model->add_option("--depth", spec.depth, "Encoder stages")
      ->check(CLI::Range(size_t{1}, size_t{3}));
  gen_model->add_option("--out", model_out, "Output directory")->required();

  // gen-inputs
  std::string model_json, inputs_out;
  uint64_t input_seed = 1;
  size_t input_count = 32;
  auto* gen_inputs = app.add_subcommand("gen-inputs", "Draw an input set");
  gen_inputs->add_option("--model", model_json, "model.json")->required();
  gen_inputs->add_option("--seed", input_seed, "Input seed");
  gen_inputs->add_option("--count", input_count, "Number of inputs")
      ->check(CLI::PositiveNumber);
  gen_inputs->add_option("--out", inputs_out, "Output inputs.json")->required();

  // sensitivity
  std::string inputs_json, table_out, kind_flag = "both", bits_flag;
  mpq::SensitivityRunOptions sens;
  auto* sensitivity =
      app.add_subcommand("sensitivity", "Per-layer sensitivity table");
  sensitivity->add_option("--model", model_json, "model.json")->required();
  sensitivity->add_option("--inputs", inputs_json, "inputs.json")->required();
  sensitivity->add_option("--kind", kind_flag, "weight, activation or both")
      ->check(CLI::IsMember({"weight", "activation", "both"}));
  sensitivity->add_option("--bits", sens.bit_widths, "Bit widths to probe")
      ->delimiter(',');
  sensitivity->add_flag("--bos-aware", sens.bos_aware,
                        "Keep the BOS row of text projections in FP");
  sensitivity->add_option("--jobs", sens.jobs, "Worker threads")
      ->check(CLI::PositiveNumber);
  sensitivity->add_option("--out", table_out, "Output JSON lines")->required();

  // allocate
  std::string table_path, alloc_out;
  double target_bits = 0.0, target_act_bits = 0.0;
  mpq::AllocateRunOptions alloc;
  auto* allocate = app.add_subcommand("allocate", "Allocate bit widths");
  allocate->add_option("--model", model_json, "model.json")->required();
  allocate->add_option("--table", table_path, "Sensitivity table")->required();
  allocate->add_option("--inputs", inputs_json, "Inputs for the proxy score")
      ->required();
  auto* weight_target = allocate->add_option(
      "--target-bits", target_bits, "Target average weight bits");
  auto* act_target = allocate->add_option(
      "--target-act-bits", target_act_bits, "Target average activation bits");
  allocate->add_option("--retain-fp", alloc.allocate.retain_fraction,
                       "Fraction of most sensitive layers kept in FP")
      ->check(CLI::Range(0.0, 0.999999));
  allocate->add_option("--budget-points", alloc.allocate.budget_points,
                       "Candidate budgets")
      ->check(CLI::PositiveNumber);
  allocate->add_option("--budget-window", alloc.allocate.budget_window_bits,
                       "Budget window in average bits");
  allocate->add_option("--ratio-points", alloc.allocate.ratio_points,
                       "Group ratio grid points")
      ->check(CLI::PositiveNumber);
  allocate->add_option("--weight-ratio-lo", alloc.allocate.weight_ratio_lo);
  allocate->add_option("--weight-ratio-hi", alloc.allocate.weight_ratio_hi);
  allocate->add_option("--act-ratio-lo", alloc.allocate.act_ratio_lo);
  allocate->add_option("--act-ratio-hi", alloc.allocate.act_ratio_hi);
  allocate->add_option("--grid-points", alloc.grid_points,
                       "Frontier grid points per group")
      ->check(CLI::PositiveNumber);
  allocate->add_flag("--bos-aware", alloc.bos_aware,
                     "BOS-aware proxy evaluation");
  allocate->add_option("--out", alloc_out, "Output directory")->required();

  // evaluate
  std::string config_json, report_out, format = "json";
  bool eval_bos_aware = false;
  auto* evaluate = app.add_subcommand("evaluate", "Compare a config to FP");
  evaluate->add_option("--model", model_json, "model.json")->required();
  evaluate->add_option("--inputs", inputs_json, "inputs.json")->required();
  evaluate->add_option("--config", config_json, "config.json")->required();
  evaluate->add_flag("--bos-aware", eval_bos_aware, "BOS-aware evaluation");
  evaluate->add_option("--format", format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  evaluate->add_option("--out", report_out, "Output report")->required();

  // pipeline
  std::string manifest;
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage");
  pipeline->add_option("--manifest", manifest, "Manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_model) {
      mpq::RunGenModel(spec, model_out);
    } else if (*gen_inputs) {
      mpq::RunGenInputs(model_json, input_seed, input_count, inputs_out);
    } else if (*sensitivity) {
      sens.kinds = KindsFromFlag(kind_flag);
      mpq::RunSensitivity(model_json, inputs_json, sens, table_out);
    } else if (*allocate) {
      if (weight_target->count() == 0 && act_target->count() == 0) {
        std::fprintf(stderr, "allocate: give --target-bits and/or --target-act-bits\n");
        return kExitUsage;
      }
      if (weight_target->count()) alloc.target.weight_bits = target_bits;
      if (act_target->count()) alloc.target.act_bits = target_act_bits;
      const mpq::BitWidthConfig config = mpq::RunAllocate(
          model_json, table_path, inputs_json, alloc, alloc_out);
      std::printf("avg_weight_bits %.6f avg_act_bits %.6f score %.6f\n",
                  config.summary.avg_weight_bits, config.summary.avg_act_bits,
                  config.score);
    } else if (*evaluate) {
      const mpq::EvaluationReport r = mpq::RunEvaluate(
          model_json, inputs_json, config_json, eval_bos_aware,
          mpq::ParseReportFormat(format), report_out);
      std::printf("ssim %.6f sqnr_db %.4f\n", r.quantized.ssim,
                  r.quantized.sqnr_db);
    } else if (*pipeline) {
      mpq::RunPipeline(mpq::ParseManifest(manifest));
    }
  } catch (const mpq::InfeasibleError& e) {
    std::fprintf(stderr, "infeasible: %s (minimum achievable %.6f)\n", e.what(),
                 e.minimum_achievable());
    return kExitInfeasible;
  } catch (const mpq::Error& e) {
    std::fprintf(stderr, "%s: %s\n", mpq::ErrorCodeName(e.code()), e.what());
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
