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

// Mixed-precision bit-width allocation.
//
// Per layer i and candidate width b the allocator knows a sensitivity score
// S[i][b] (higher is better) and a cost M[i][b] = b * elements_i bits. It
// picks exactly one width per layer to maximize sum S subject to
// sum M <= B: a multiple-choice knapsack. Weights and activations, and the
// content and quality layer groups, are allocated independently.

#ifndef MPQ_ALLOCATOR_H_
#define MPQ_ALLOCATOR_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mpq/layers.h"
#include "mpq/quantizer.h"
#include "mpq/sensitivity.h"

namespace mpq {

// ----- Multiple-choice knapsack -----

struct MckpOption {
  int bits = 8;
  double score = 0.0;
  int64_t cost = 0;
};

struct MckpItem {
  std::string layer_id;
  std::vector<MckpOption> options;
};

struct MckpInstance {
  std::vector<MckpItem> items;
  int64_t budget = 0;

  // Every item has an option, costs are positive, bit widths unique.
  void Validate() const;
  int64_t MinCost() const;
};

struct MckpSolution {
  // Chosen bit width per item, in instance order.
  std::vector<int> bits;
  // Sum of chosen scores accumulated in instance order.
  double objective = 0.0;
  int64_t cost = 0;
};

// Evaluates a choice vector (bit widths in instance order) the same way
// every solver does, so objectives are comparable bit-for-bit.
MckpSolution EvaluateChoice(const MckpInstance& inst,
                            const std::vector<int>& bits);

// Total order on feasible solutions: higher objective, then lower cost,
// then the lexicographically smaller bit vector with items ordered by
// layer id. Returns true when `a` is preferred over `b`.
bool PreferSolution(const MckpInstance& inst, const MckpSolution& a,
                    const MckpSolution& b);

// Exact branch-and-bound with a linear-relaxation bound over the convex hull
// of each item's undominated options. Throws InfeasibleError (carrying the
// minimum achievable cost) when even the cheapest choice exceeds the budget.
MckpSolution SolveMckp(const MckpInstance& inst);

// Dynamic program over cost units (costs divided by their gcd). Exact on
// the objective; used as an independent cross-check of SolveMckp.
MckpSolution SolveMckpDp(const MckpInstance& inst);

// Builds the instance for one tensor kind over `layers`, scoring option b
// of layer i with table[i, kind, b] and costing it b * elements_i.
MckpInstance BuildInstance(const SensitivityTable& table,
                           const std::vector<LayerCost>& layers,
                           TensorKind kind, int64_t budget);

int64_t ElementCount(const LayerCost& layer, TensorKind kind);

// ----- Budget split -----

// Splits `total` between the content and quality groups in proportion to
// k * content_mass : quality_mass. B_quality = total - B_content exactly.
std::pair<int64_t, int64_t> SplitBudget(int64_t total, int64_t content_mass,
                                        int64_t quality_mass, double k);

// ----- Configurations and cost model -----

struct CostSummary {
  double avg_weight_bits = 0.0;
  double avg_act_bits = 0.0;
  int64_t storage_bits = 0;
  int64_t bops = 0;
  // Sums of the FP16 reference quantities; the ratios below are
  // fp16_storage_bits / storage_bits and fp16_bops / bops.
  int64_t fp16_storage_bits = 0;
  int64_t fp16_bops = 0;
  double storage_opt_ratio = 0.0;
  double compute_opt_ratio = 0.0;
};

CostSummary ComputeCostSummary(const QuantConfig& config,
                               const std::vector<LayerCost>& layers);

struct BitWidthConfig {
  QuantConfig bits;
  std::set<std::string> fp_retained;
  CostSummary summary;
  // Proxy score of the emitted configuration (mean output SQNR).
  double score = 0.0;
};

nlohmann::ordered_json BitWidthConfigToJson(const BitWidthConfig& config);
BitWidthConfig BitWidthConfigFromJson(const nlohmann::json& j);

// ----- FP retention -----

// The ceil(fraction * n_layers) layers with the lowest score at the lowest
// probed bit width, in rank order.
std::set<std::string> RetainFp(const SensitivityTable& table, double fraction,
                               std::optional<TensorKind> kind = std::nullopt);

// ----- Sweeps -----

// Scores a per-layer bit assignment for one tensor kind (layers absent from
// the map stay FP). Higher is better.
using ProxyScore =
    std::function<double(TensorKind, const std::map<std::string, int>&)>;

struct SweepCell {
  int64_t budget = 0;
  double ratio = 0.0;  // K for budget-ratio sweeps; unused by grid sweeps.
  double content_target_bits = 0.0;  // Grid sweeps only.
  double quality_target_bits = 0.0;  // Grid sweeps only.
  bool feasible = false;
  std::map<std::string, int> bits;
  double avg_bits = 0.0;
  double score = 0.0;
};

struct AllocateOptions {
  int budget_points = 5;               // M
  double budget_window_bits = 0.25;    // Delta B, in average bits
  int ratio_points = 8;
  double weight_ratio_lo = 0.45;
  double weight_ratio_hi = 1.36;
  double act_ratio_lo = 0.94;
  double act_ratio_hi = 1.09;
  double retain_fraction = 0.0;
};

struct KindAllocation {
  std::map<std::string, int> bits;
  std::vector<SweepCell> cells;
  double score = 0.0;
  double avg_bits = 0.0;
};

// Budget/ratio sweep for one tensor kind over the non-retained layers:
// for every budget in [B_all - dB, B_all] and every ratio K, split the
// budget between groups, solve each group's knapsack and score the merged
// assignment; return the best-scoring cell. B_all is sized so the average
// over all layers, with `retained` charged at 16 bits, stays <= target.
KindAllocation AllocateKind(const SensitivityTable& table,
                            const std::vector<LayerCost>& layers,
                            TensorKind kind, double target_avg_bits,
                            const std::set<std::string>& retained,
                            const AllocateOptions& options,
                            const ProxyScore& proxy);

struct AllocationTarget {
  std::optional<double> weight_bits;
  std::optional<double> act_bits;
};

// Full allocation: FP retention, then an independent sweep per targeted
// tensor kind. Untargeted kinds stay FP. The returned score is the proxy
// score of the weight allocation when weights are targeted, otherwise of
// the activation allocation.
BitWidthConfig Allocate(const SensitivityTable& table,
                        const std::vector<LayerCost>& layers,
                        const AllocationTarget& target,
                        const AllocateOptions& options,
                        const ProxyScore& proxy);

// Independent per-group targets from a uniform grid of `points` average
// bit widths in [lo, hi]; points x points cells.
std::vector<SweepCell> SweepGrid(const SensitivityTable& table,
                                 const std::vector<LayerCost>& layers,
                                 TensorKind kind, double lo, double hi,
                                 int points, const ProxyScore& proxy);

// ----- Baselines -----

// Starts from all 8-bit and repeatedly demotes the least sensitive layer
// (highest score at the lowest probed width) that can still drop a width
// step, until the assignment fits the budget.
std::map<std::string, int> NaiveSortingAllocation(
    const SensitivityTable& table, const std::vector<LayerCost>& layers,
    TensorKind kind, int64_t budget);

// Uniformly random widths, then random demotions until within budget.
std::map<std::string, int> RandomAllocation(
    const std::vector<LayerCost>& layers, TensorKind kind, int64_t budget,
    RngSeed seed);

double AverageBits(const std::map<std::string, int>& bits,
                   const std::vector<LayerCost>& layers, TensorKind kind);

// ----- Pareto frontier -----

struct ParetoPoint {
  double avg_bits = 0.0;
  double score = 0.0;
  size_t index = 0;  // Position in the caller's point list.
  bool operator==(const ParetoPoint&) const = default;
};

// True if `a` is at least as good in both coordinates and strictly better
// in one (fewer bits, higher score).
bool Dominates(const ParetoPoint& a, const ParetoPoint& b);

// Non-dominated subset sorted by avg_bits. Exact duplicates keep the one
// with the smallest index.
std::vector<ParetoPoint> ParetoFrontier(const std::vector<ParetoPoint>& points);

std::vector<double> Linspace(double lo, double hi, int points);

}  // namespace mpq

#endif  // MPQ_ALLOCATOR_H_
