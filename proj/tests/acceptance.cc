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

// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is non-zero when any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mpq/allocator.h"
#include "mpq/metrics.h"
#include "mpq/pipeline.h"
#include "mpq/quantizer.h"
#include "mpq/sensitivity.h"
#include "mpq/tensor_io.h"
#include "mpq/toy_model.h"

namespace mpq {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shared fixture: default toy model, its inputs and sensitivity tables.
struct Fixture {
  ModelSpec spec;
  Model model;
  std::vector<ModelInput> inputs;
  SensitivityTable table;       // group metrics, both kinds, BOS-aware
  SensitivityTable ssim_table;  // SSIM for every layer, both kinds

  Fixture() : model(BuildToyUnet(spec)) {
    inputs = MakeInputs(spec, RngSeed{1}, 32);
    for (TensorKind kind : {TensorKind::kWeight, TensorKind::kActivation}) {
      AnalyzeOptions o;
      o.tensor_kind = kind;
      o.bos_aware = true;
      o.jobs = 4;
      table.Append(Analyze(model, inputs, o));
      o.metric_override = MetricKind::kSsim;
      ssim_table.Append(Analyze(model, inputs, o));
    }
  }
};

MckpInstance RandomInstance(SplitMix64& rng) {
  MckpInstance inst;
  const size_t n = 1 + rng.NextBelow(10);
  int64_t lo = 0, hi = 0;
  for (size_t i = 0; i < n; ++i) {
    const int64_t size = 1 + static_cast<int64_t>(rng.NextBelow(100));
    MckpItem item{"l" + std::to_string(i), {}};
    for (int b : kCandidateBits) {
      item.options.push_back({b, rng.NextUniform() * 10.0, b * size});
    }
    inst.items.push_back(item);
    lo += 2 * size;
    hi += 8 * size;
  }
  inst.budget = lo + static_cast<int64_t>(
                         rng.NextBelow(static_cast<uint64_t>(hi - lo + 1)));
  return inst;
}

double Enumerate(const MckpInstance& inst) {
  const size_t n = inst.items.size();
  std::vector<size_t> pick(n, 0);
  double best = -INFINITY;
  while (true) {
    double obj = 0.0;
    int64_t cost = 0;
    for (size_t i = 0; i < n; ++i) {
      obj += inst.items[i].options[pick[i]].score;
      cost += inst.items[i].options[pick[i]].cost;
    }
    if (cost <= inst.budget) best = std::max(best, obj);
    size_t k = 0;
    while (k < n && ++pick[k] == inst.items[k].options.size()) pick[k++] = 0;
    if (k == n) break;
  }
  return best;
}

Outcome MckpOracle() {
  const auto start = Clock::now();
  SplitMix64 rng(RngSeed{1});
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const MckpInstance inst = RandomInstance(rng);
    if (SolveMckp(inst).objective != Enumerate(inst)) ++mismatches;
  }
  const double t = Seconds(start);
  return {mismatches == 0 && t < 10.0,
          Fmt("%.0f/200 mismatches, %.2f s", mismatches, t)};
}

Outcome RoundTripBound() {
  SplitMix64 rng(RngSeed{2});
  int64_t checked = 0, violations = 0;
  for (int bits : kCandidateBits) {
    for (int i = 0; i < 100; ++i) {
      const Shape shape = {2 + rng.NextBelow(6), 3 + rng.NextBelow(30)};
      const RngSeed seed{rng.NextU64()};
      const double offset = rng.NextUniform() * 4.0 - 2.0;
      const double spread = std::exp(rng.NextUniform() * 6.0 - 3.0);
      const Tensor t = i % 2 == 0
                           ? RandomNormal(shape, offset, spread, seed)
                           : RandomUniform(shape, offset, offset + spread, seed);
      const Granularity g =
          i % 3 == 0 ? Granularity::kPerOutputChannel : Granularity::kPerTensor;
      const QuantParams p = g == Granularity::kPerTensor
                                  ? CalibrateMinMax(t, bits, g)
                                  : CalibrateMinMax(t, bits, g, size_t{0});
      const Tensor r = FakeQuant(t, p);
      const size_t inner = shape[1];
      for (size_t k = 0; k < t.size(); ++k) {
        const double s = p.scales[p.num_slices() == 1 ? 0 : k / inner];
        ++checked;
        if (!(std::abs(t[k] - r[k]) <= s / 2.0)) ++violations;
      }
    }
  }
  return {violations == 0,
          Fmt("%.0f violations over %.0f elements", violations, checked)};
}

Outcome MetricIdentities() {
  double worst_ssim = 0.0, worst_sqnr = 0.0;
  bool cap_ok = true;
  for (uint64_t s = 0; s < 20; ++s) {
    const Tensor x = RandomNormal({4, 16, 16}, 0.3, 1.5, RngSeed{s});
    const Tensor n = RandomNormal({4, 16, 16}, 0.0, 0.1, RngSeed{s + 100});
    const Tensor y = Add(x, n);
    worst_ssim = std::max(worst_ssim, std::abs(Ssim(x, x, SsimWeights{}).value - 1.0));
    worst_ssim = std::max(worst_ssim, std::abs(SsimStabilized(x, x).value - 1.0));
    const double base = SqnrDb(x, y).value;
    for (double c : {1e-3, 0.37, 2.0, 1e3}) {
      worst_sqnr = std::max(
          worst_sqnr, std::abs(SqnrDb(Scale(x, c), Scale(y, c)).value - base));
    }
    cap_ok = cap_ok && SqnrDb(x, x).value == 100.0;
  }
  return {worst_ssim <= 1e-12 && worst_sqnr <= 1e-9 && cap_ok,
          Fmt("max |ssim-1| %.3g, max scale drift %.3g dB, cap %.0f", worst_ssim,
              worst_sqnr, cap_ok ? 100.0 : 0.0)};
}

Outcome CostModel(const Fixture& f) {
  const std::vector<LayerCost> costs = f.model.costs();
  const std::vector<std::string> ids = f.model.layer_ids();
  struct Case {
    int w, a;
    double storage, compute;
  };
  bool ok = true;
  std::string detail;
  for (const Case& c : {Case{8, 8, 2.0, 4.0}, Case{4, 16, 4.0, 1.0},
                        Case{4, 8, 4.0, 8.0}}) {
    const CostSummary s =
        ComputeCostSummary(QuantConfig::Uniform(ids, c.w, c.a), costs);
    ok = ok && s.storage_opt_ratio == c.storage &&
         s.compute_opt_ratio == c.compute &&
         s.fp16_storage_bits == static_cast<int64_t>(c.storage) * s.storage_bits &&
         s.fp16_bops == static_cast<int64_t>(c.compute) * s.bops;
    detail += "W" + std::to_string(c.w) + "A" + std::to_string(c.a) +
              Fmt(" %.1fx/%.1fx, ", s.storage_opt_ratio, s.compute_opt_ratio);
  }
  // 83 parameters at 4 bits and 17 at 2 bits average exactly 3.66 bits.
  const std::vector<LayerCost> mixed = {
      {"a", LayerKind::kConv, LayerGroup::kQuality, 83, 1, 1},
      {"b", LayerKind::kFfn, LayerGroup::kContent, 17, 1, 1}};
  QuantConfig config = QuantConfig::AllFp({"a", "b"});
  config["a"].weight_bits = 4;
  config["b"].weight_bits = 2;
  const CostSummary s = ComputeCostSummary(config, mixed);
  ok = ok && s.storage_bits == 366 && s.fp16_storage_bits == 1600 &&
       s.storage_opt_ratio >= 4.37 && s.storage_opt_ratio <= 4.40;
  detail += Fmt("avg %.2f bits -> %.4fx", s.avg_weight_bits, s.storage_opt_ratio);
  return {ok, detail};
}

Outcome BosAware(const Fixture& f) {
  const std::vector<ModelInput> inputs(f.inputs.begin(),
                                       f.inputs.begin() + kProxyInputs);
  double ratio = INFINITY;
  for (const auto& in : inputs) {
    const BosSplit split = SplitBos(in.embedding);
    const double body = ReduceMinMax(split.rest)[0].max;
    const double body_abs = std::max(body, -ReduceMinMax(split.rest)[0].min);
    const MinMax bos = ReduceMinMax(split.bos_feature)[0];
    ratio = std::min(ratio, std::max(bos.max, -bos.min) / body_abs);
  }
  QuantConfig config = QuantConfig::AllFp(f.model.layer_ids());
  for (const auto& l : f.model.layers()) {
    if (l.kind == LayerKind::kCrossAttnToK || l.kind == LayerKind::kCrossAttnToV) {
      config[l.id].act_bits = 8;
    }
  }
  const ActivationStats stats = CalibrateActivations(f.model, inputs);
  double naive = 0.0, aware = 0.0;
  for (const auto& in : inputs) {
    const Tensor ref = Forward(f.model, in);
    ForwardOptions o;
    o.config = &config;
    o.act_stats = &stats;
    naive += SqnrDb(ref, Forward(f.model, in, o)).value;
    BosCache cache;
    o.bos_aware = true;
    o.bos_cache = &cache;
    aware += SqnrDb(ref, Forward(f.model, in, o)).value;
  }
  naive /= static_cast<double>(inputs.size());
  aware /= static_cast<double>(inputs.size());
  return {ratio >= 50.0 && aware >= naive + 10.0,
          Fmt("BOS/body %.1f, naive %.2f dB, BOS-aware %.2f dB", ratio, naive,
              aware)};
}

Outcome GroupingSignal(const Fixture& f) {
  bool ok = true;
  std::string detail;
  for (TensorKind kind : {TensorKind::kWeight, TensorKind::kActivation}) {
    double c = 0.0, q = 0.0;
    int nc = 0, nq = 0;
    for (const auto& l : f.model.layers()) {
      const double s = f.ssim_table.Find(l.id, kind, 2).score;
      if (l.group == LayerGroup::kContent) {
        c += s;
        ++nc;
      } else {
        q += s;
        ++nq;
      }
    }
    c /= nc;
    q /= nq;
    ok = ok && c < q;
    detail += std::string(TensorKindName(kind)) +
              Fmt(" content %.4f < quality %.4f", c, q) + (kind == TensorKind::kWeight ? "; " : "");
  }
  return {ok, detail};
}

Outcome Dominance(const Fixture& f) {
  const auto start = Clock::now();
  const std::vector<ModelInput> proxy_inputs(f.inputs.begin(),
                                             f.inputs.begin() + kProxyInputs);
  const ProxyEvaluator proxy(f.model, proxy_inputs, true);
  const std::vector<LayerCost> costs = f.model.costs();
  const TensorKind kind = TensorKind::kWeight;
  int64_t total = 0;
  for (const auto& l : costs) total += ElementCount(l, kind);
  bool ok = true;
  std::string detail;
  for (double t : {3.0, 4.0, 5.0}) {
    AllocationTarget target;
    target.weight_bits = t;
    const BitWidthConfig c =
        Allocate(f.table, costs, target, AllocateOptions{}, proxy.AsProxy());
    const auto budget = static_cast<int64_t>(std::floor(t * static_cast<double>(total)));
    const double naive =
        proxy.Score(kind, NaiveSortingAllocation(f.table, costs, kind, budget));
    double random = 0.0;
    for (uint64_t i = 0; i < 20; ++i) {
      random += proxy.Score(kind, RandomAllocation(costs, kind, budget, RngSeed{100 + i}));
    }
    random /= 20.0;
    ok = ok && c.summary.avg_weight_bits <= t && c.score >= naive &&
         naive >= random && c.score >= random;
    detail += Fmt("%.0f bits: %.2f/", t, c.score) +
              Fmt("%.2f/%.2f dB; ", naive, random);
  }
  const double secs = Seconds(start);
  detail += Fmt("%.1f s", secs);
  return {ok && secs < 120.0, detail};
}

Outcome Pareto(const Fixture& f) {
  const std::vector<ModelInput> proxy_inputs(f.inputs.begin(),
                                             f.inputs.begin() + kProxyInputs);
  const ProxyEvaluator proxy(f.model, proxy_inputs, true);
  bool ok = true;
  size_t cells_total = 0, frontier_total = 0;
  for (TensorKind kind : {TensorKind::kWeight, TensorKind::kActivation}) {
    const auto cells = SweepGrid(f.table, f.model.costs(), kind, 3.0, 8.0, 20,
                                 proxy.AsProxy());
    std::vector<ParetoPoint> points;
    for (size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].feasible) points.push_back({cells[i].avg_bits, cells[i].score, i});
    }
    const auto frontier = ParetoFrontier(points);
    for (const auto& p : points) {
      bool covered = false;
      for (const auto& q : frontier) {
        const bool q_dominated = p.avg_bits <= q.avg_bits && p.score >= q.score &&
                                 (p.avg_bits < q.avg_bits || p.score > q.score);
        if (q_dominated) ok = false;
        const bool dominates_p = q.avg_bits <= p.avg_bits && q.score >= p.score;
        covered = covered || dominates_p;
      }
      ok = ok && covered;
    }
    cells_total += points.size();
    frontier_total += frontier.size();
  }
  return {ok, Fmt("%.0f cells, %.0f frontier points", cells_total, frontier_total)};
}

Outcome Monotonicity(const Fixture& f) {
  int good = 0, n = 0;
  for (TensorKind kind : {TensorKind::kWeight, TensorKind::kActivation}) {
    for (const auto& l : f.model.layers()) {
      const double s2 = f.table.Find(l.id, kind, 2).score;
      const double s4 = f.table.Find(l.id, kind, 4).score;
      const double s8 = f.table.Find(l.id, kind, 8).score;
      ++n;
      if (s8 >= s4 && s4 >= s2) ++good;
    }
  }
  return {good >= 0.95 * n, Fmt("%.0f/%.0f monotone", good, n)};
}

std::map<std::string, std::string> TreeBytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).generic_string()] = ReadFileBytes(e.path());
    }
  }
  return out;
}

Outcome Determinism() {
  const fs::path root = fs::temp_directory_path() /
                        ("mpq_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string manifest = R"({
    "out_dir": "out",
    "model": {"seed": 0},
    "inputs": {"seed": 1, "count": 32},
    "sensitivity": {"kinds": ["weight", "activation"], "bos_aware": true, "jobs": 4},
    "allocate": {"target_bits": 4.0, "target_act_bits": 8.0}
  })";
  double slowest = 0.0;
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    WriteFileBytes(root / run / "manifest.json", manifest);
    const auto start = Clock::now();
    RunPipeline(ParseManifest(root / run / "manifest.json"));
    slowest = std::max(slowest, Seconds(start));
  }
  const auto a = TreeBytes(root / "a/out");
  const auto b = TreeBytes(root / "b/out");
  fs::remove_all(root);
  return {!a.empty() && a == b && slowest < 300.0,
          Fmt("%.0f files, identical %.0f, slowest run %.1f s",
              static_cast<double>(a.size()), a == b ? 1.0 : 0.0, slowest)};
}

int Run() {
  std::printf("building fixture...\n");
  std::fflush(stdout);
  const Fixture fixture;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"MCKP oracle equivalence", MckpOracle},
      {"quantization round-trip bound", RoundTripBound},
      {"SSIM/SQNR identities", MetricIdentities},
      {"cost-model ratios", [&] { return CostModel(fixture); }},
      {"BOS-aware effectiveness", [&] { return BosAware(fixture); }},
      {"metric-decoupled grouping signal", [&] { return GroupingSignal(fixture); }},
      {"allocation dominance", [&] { return Dominance(fixture); }},
      {"Pareto correctness", [&] { return Pareto(fixture); }},
      {"sensitivity monotonicity", [&] { return Monotonicity(fixture); }},
      {"end-to-end determinism", Determinism},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace mpq

int main() { return mpq::Run(); }
