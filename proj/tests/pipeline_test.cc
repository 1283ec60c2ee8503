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

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "gtest/gtest.h"
#include "mpq/error.h"
#include "mpq/pipeline.h"
#include "mpq/tensor_io.h"

namespace mpq {
namespace {

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("mpq_pipeline_") + info->name() + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int Cli(const std::string& args) const {
    const std::string cmd = std::string(MPQ_CLI_PATH) + " " + args +
                            " >" + (dir_ / "stdout.txt").string() + " 2>" +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string P(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
};

std::map<std::string, std::string> TreeBytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).generic_string()] = ReadFileBytes(e.path());
    }
  }
  return out;
}

TEST_F(PipelineTest, ExitCodes) {
  EXPECT_EQ(Cli("gen-model --width 4 --out " + P("m")), 2);
  EXPECT_EQ(Cli("no-such-command"), 2);
  EXPECT_EQ(Cli("gen-inputs --model " + P("missing.json") + " --out " + P("i.json")), 5);
  ASSERT_EQ(Cli("gen-model --out " + P("m")), 0);
  ASSERT_EQ(Cli("gen-inputs --model " + P("m/model.json") + " --count 2 --out " +
                P("i/inputs.json")),
            0);
  ASSERT_EQ(Cli("sensitivity --model " + P("m/model.json") + " --inputs " +
                P("i/inputs.json") + " --kind weight --out " + P("t.jsonl")),
            0);
  const std::string alloc = "allocate --model " + P("m/model.json") + " --table " +
                            P("t.jsonl") + " --inputs " + P("i/inputs.json") +
                            " --grid-points 2 --out " + P("a");
  EXPECT_EQ(Cli(alloc), 2);
  EXPECT_EQ(Cli(alloc + " --target-bits 1.5"), 2);
  EXPECT_EQ(Cli(alloc + " --target-bits 2.5 --retain-fp 0.5"), 4);
  // An activation target needs activation rows in the table.
  EXPECT_EQ(Cli(alloc + " --target-act-bits 4"), 3);

  WriteFileBytes(P("i/inputs.bin"), "garbage");
  EXPECT_EQ(Cli("evaluate --model " + P("m/model.json") + " --inputs " +
                P("i/inputs.json") + " --config " + P("a/config.json") +
                " --out " + P("r.json")),
            3);
}

TEST_F(PipelineTest, GenModelIsDeterministic) {
  ASSERT_EQ(Cli("gen-model --seed 3 --width 8 --out " + P("a")), 0);
  ASSERT_EQ(Cli("gen-model --seed 3 --width 8 --out " + P("b")), 0);
  ASSERT_EQ(Cli("gen-model --seed 4 --width 8 --out " + P("c")), 0);
  EXPECT_EQ(TreeBytes(dir_ / "a"), TreeBytes(dir_ / "b"));
  EXPECT_NE(ReadFileBytes(dir_ / "a/weights.bin"), ReadFileBytes(dir_ / "c/weights.bin"));
}

TEST_F(PipelineTest, CliStagesEndToEnd) {
  ASSERT_EQ(Cli("gen-model --out " + P("m")), 0);
  ASSERT_EQ(Cli("gen-inputs --model " + P("m/model.json") + " --count 4 --out " +
                P("i/inputs.json")),
            0);
  ASSERT_EQ(Cli("sensitivity --model " + P("m/model.json") + " --inputs " +
                P("i/inputs.json") + " --kind both --bits 2,4,8 --bos-aware --jobs 2 --out " +
                P("t.jsonl")),
            0);
  const Model model = LoadModel(dir_ / "m/model.json");
  const SensitivityTable table =
      SensitivityTable::FromJsonLines(ReadFileBytes(dir_ / "t.jsonl"));
  EXPECT_EQ(table.entries().size(), model.layers().size() * 2 * 3);

  ASSERT_EQ(Cli("allocate --model " + P("m/model.json") + " --table " + P("t.jsonl") +
                " --inputs " + P("i/inputs.json") +
                " --target-bits 4 --target-act-bits 8 --grid-points 3 --bos-aware --out " +
                P("a")),
            0);
  const BitWidthConfig config = BitWidthConfigFromJson(
      nlohmann::json::parse(ReadFileBytes(dir_ / "a/config.json")));
  EXPECT_LE(config.summary.avg_weight_bits, 4.0 + 1e-9);
  EXPECT_LE(config.summary.avg_act_bits, 8.0 + 1e-9);
  const std::string frontier = ReadFileBytes(dir_ / "a/frontier.csv");
  EXPECT_EQ(frontier.rfind("avg_bits,score,config_path\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir_ / "a/frontier/point_000.json"));

  ASSERT_EQ(Cli("evaluate --model " + P("m/model.json") + " --inputs " +
                P("i/inputs.json") + " --config " + P("a/config.json") +
                " --bos-aware --format csv --out " + P("r.csv")),
            0);
  EXPECT_EQ(ReadFileBytes(dir_ / "r.csv").rfind("metric,value,fp_baseline,delta\n", 0), 0u);

  BitWidthConfig fp;
  fp.bits = QuantConfig::AllFp(model.layer_ids());
  WriteFileBytes(dir_ / "fp.json", BitWidthConfigToJson(fp).dump(2));
  ASSERT_EQ(Cli("evaluate --model " + P("m/model.json") + " --inputs " +
                P("i/inputs.json") + " --config " + P("fp.json") + " --out " + P("r.json")),
            0);
  const auto report = nlohmann::json::parse(ReadFileBytes(dir_ / "r.json"));
  EXPECT_EQ(report["quantized"]["ssim"].get<double>(), 1.0);
  EXPECT_EQ(report["quantized"]["sqnr_db"].get<double>(), kDefaultSqnrCapDb);
  EXPECT_EQ(report["summary"]["storage_opt_ratio"].get<double>(), 1.0);
}

TEST_F(PipelineTest, InputsRoundTripAndCorruption) {
  const ModelSpec spec;
  const auto inputs = MakeInputs(spec, RngSeed{5}, 3);
  SaveInputs(inputs, dir_ / "in.json");
  const auto back = LoadInputs(dir_ / "in.json", &spec);
  ASSERT_EQ(back.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].latent, inputs[i].latent);
    EXPECT_EQ(back[i].embedding, inputs[i].embedding);
    EXPECT_EQ(back[i].timestep, inputs[i].timestep);
  }
  std::string bin = ReadFileBytes(dir_ / "in.bin");
  bin[bin.size() / 2] ^= 1;
  WriteFileBytes(dir_ / "in.bin", bin);
  try {
    LoadInputs(dir_ / "in.json");
    FAIL() << "expected a checksum error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
  }
}

TEST_F(PipelineTest, EvaluateRejectsMismatchedConfig) {
  ModelSpec spec;
  spec.width = 8;
  const Model model = BuildToyUnet(spec);
  const auto inputs = MakeInputs(spec, RngSeed{1}, 1);
  try {
    Evaluate(model, inputs, QuantConfig::AllFp({"nope"}), false);
    FAIL() << "expected a validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
  }
}

TEST_F(PipelineTest, ManifestDefaultsAndErrors) {
  WriteFileBytes(dir_ / "m.json", R"({"out_dir": "out"})");
  const PipelineManifest m = ParseManifest(dir_ / "m.json");
  EXPECT_EQ(m.out_dir, dir_ / "out");
  EXPECT_EQ(m.inputs_count, 32u);
  EXPECT_EQ(m.allocate.target.weight_bits, 4.0);
  EXPECT_EQ(m.report_format, ReportFormat::kJson);
  WriteFileBytes(dir_ / "bad.json", "{");
  EXPECT_THROW(ParseManifest(dir_ / "bad.json"), Error);
  EXPECT_THROW(ParseReportFormat("xml"), Error);
}

TEST_F(PipelineTest, PipelineRunsAreByteIdentical) {
  const std::string manifest = R"({
    "out_dir": "out",
    "model": {"seed": 2, "width": 8},
    "inputs": {"seed": 3, "count": 8},
    "sensitivity": {"kinds": ["weight", "activation"], "bos_aware": true, "jobs": 2},
    "allocate": {"target_bits": 4.0, "target_act_bits": 8.0, "grid_points": 3},
    "evaluate": {"format": "csv"}
  })";
  for (const char* run : {"a", "b"}) {
    fs::create_directories(dir_ / run);
    WriteFileBytes(dir_ / run / "m.json", manifest);
  }
  RunPipeline(ParseManifest(dir_ / "a/m.json"));
  ASSERT_EQ(Cli("pipeline --manifest " + P("b/m.json")), 0);
  const auto a = TreeBytes(dir_ / "a/out");
  EXPECT_EQ(a, TreeBytes(dir_ / "b/out"));
  EXPECT_TRUE(a.count("report.csv"));
  const auto sums = nlohmann::json::parse(a.at("checksums.json"));
  for (const auto& [path, bytes] : a) {
    if (path == "checksums.json") continue;
    EXPECT_EQ(sums.at(path).get<std::string>(), Sha256Hex(bytes)) << path;
  }
}

}  // namespace
}  // namespace mpq
