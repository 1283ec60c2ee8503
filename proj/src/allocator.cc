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

#include "mpq/allocator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mpq/error.h"

namespace mpq {
namespace {

constexpr int64_t kMaxDpStates = 20'000'000;

// An item's options with dominated ones removed, sorted by increasing cost
// and (therefore) strictly increasing score.
std::vector<MckpOption> Undominated(const MckpItem& item) {
  std::vector<MckpOption> sorted = item.options;
  std::sort(sorted.begin(), sorted.end(),
            [](const MckpOption& a, const MckpOption& b) {
              if (a.cost != b.cost) return a.cost < b.cost;
              if (a.score != b.score) return a.score > b.score;
              return a.bits < b.bits;
            });
  std::vector<MckpOption> kept;
  for (const MckpOption& o : sorted) {
    if (kept.empty() || o.score > kept.back().score) kept.push_back(o);
  }
  return kept;
}

struct Increment {
  int64_t cost;
  double gain;
  double efficiency() const { return gain / static_cast<double>(cost); }
};

// Upper concave hull steps of an undominated option list.
std::vector<Increment> HullIncrements(const std::vector<MckpOption>& opts) {
  std::vector<size_t> hull{0};
  for (size_t i = 1; i < opts.size(); ++i) {
    while (hull.size() >= 2) {
      const MckpOption& a = opts[hull[hull.size() - 2]];
      const MckpOption& b = opts[hull.back()];
      const MckpOption& c = opts[i];
      // Drop b if it lies on or below the segment a-c.
      const double lhs = (b.score - a.score) * static_cast<double>(c.cost - a.cost);
      const double rhs = (c.score - a.score) * static_cast<double>(b.cost - a.cost);
      if (lhs <= rhs) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(i);
  }
  std::vector<Increment> steps;
  for (size_t i = 1; i < hull.size(); ++i) {
    steps.push_back({opts[hull[i]].cost - opts[hull[i - 1]].cost,
                     opts[hull[i]].score - opts[hull[i - 1]].score});
  }
  return steps;
}

class BranchAndBound {
 public:
  explicit BranchAndBound(const MckpInstance& inst) : inst_(inst) {
    const size_t n = inst.items.size();
    options_.resize(n);
    suffix_min_cost_.assign(n + 1, 0);
    suffix_base_score_.assign(n + 1, 0.0);
    suffix_steps_.resize(n + 1);
    for (size_t i = 0; i < n; ++i) options_[i] = Undominated(inst.items[i]);
    for (size_t k = n; k-- > 0;) {
      suffix_min_cost_[k] = suffix_min_cost_[k + 1] + options_[k].front().cost;
      suffix_base_score_[k] =
          suffix_base_score_[k + 1] + options_[k].front().score;
      suffix_steps_[k] = suffix_steps_[k + 1];
      for (const Increment& s : HullIncrements(options_[k])) {
        suffix_steps_[k].push_back(s);
      }
      std::stable_sort(suffix_steps_[k].begin(), suffix_steps_[k].end(),
                       [](const Increment& a, const Increment& b) {
                         return a.efficiency() > b.efficiency();
                       });
    }
    // Try high-score options first so good incumbents appear early.
    for (auto& opts : options_) std::reverse(opts.begin(), opts.end());
    choice_.assign(n, 0);
  }

  MckpSolution Solve() {
    Search(0, 0, 0.0);
    return best_;
  }

 private:
  // LP relaxation of items k.. with `remaining` budget.
  double Bound(size_t k, int64_t remaining) const {
    int64_t slack = remaining - suffix_min_cost_[k];
    double bound = suffix_base_score_[k];
    for (const Increment& s : suffix_steps_[k]) {
      if (s.cost <= slack) {
        bound += s.gain;
        slack -= s.cost;
      } else {
        bound += s.gain * static_cast<double>(slack) / static_cast<double>(s.cost);
        break;
      }
    }
    return bound;
  }

  void Search(size_t k, int64_t cost, double score) {
    if (k == inst_.items.size()) {
      MckpSolution candidate = EvaluateChoice(inst_, choice_);
      if (!have_best_ || PreferSolution(inst_, candidate, best_)) {
        best_ = std::move(candidate);
        have_best_ = true;
      }
      return;
    }
    if (have_best_) {
      const double tol = 1e-9 * (1.0 + std::abs(best_.objective));
      if (score + Bound(k, inst_.budget - cost) < best_.objective - tol) return;
    }
    for (const MckpOption& o : options_[k]) {
      if (cost + o.cost + suffix_min_cost_[k + 1] > inst_.budget) continue;
      choice_[k] = o.bits;
      Search(k + 1, cost + o.cost, score + o.score);
    }
  }

  const MckpInstance& inst_;
  std::vector<std::vector<MckpOption>> options_;
  std::vector<int64_t> suffix_min_cost_;
  std::vector<double> suffix_base_score_;
  std::vector<std::vector<Increment>> suffix_steps_;
  std::vector<int> choice_;
  MckpSolution best_;
  bool have_best_ = false;
};

void ThrowIfInfeasible(const MckpInstance& inst) {
  const int64_t min_cost = inst.MinCost();
  if (min_cost > inst.budget) {
    throw InfeasibleError("budget " + std::to_string(inst.budget) +
                              " bits is below the minimum achievable cost " +
                              std::to_string(min_cost) + " bits",
                          static_cast<double>(min_cost));
  }
}

const MckpOption& OptionFor(const MckpItem& item, int bits) {
  for (const auto& o : item.options) {
    if (o.bits == bits) return o;
  }
  throw Error(ErrorCode::kInvalidParameter,
              "item " + item.layer_id + " has no " + std::to_string(bits) +
                  "-bit option");
}

int64_t SumElements(const std::vector<LayerCost>& layers, TensorKind kind) {
  int64_t total = 0;
  for (const auto& l : layers) total += ElementCount(l, kind);
  return total;
}

std::vector<LayerCost> FilterGroup(const std::vector<LayerCost>& layers,
                                   LayerGroup group,
                                   const std::set<std::string>& excluded) {
  std::vector<LayerCost> out;
  for (const auto& l : layers) {
    if (l.group == group && !excluded.count(l.id)) out.push_back(l);
  }
  return out;
}

// Memoizes proxy scores by assignment; many sweep cells coincide.
class ScoreCache {
 public:
  ScoreCache(const ProxyScore& proxy, TensorKind kind)
      : proxy_(proxy), kind_(kind) {}

  double operator()(const std::map<std::string, int>& bits) {
    auto it = cache_.find(bits);
    if (it != cache_.end()) return it->second;
    const double score = proxy_(kind_, bits);
    cache_.emplace(bits, score);
    return score;
  }

 private:
  const ProxyScore& proxy_;
  TensorKind kind_;
  std::map<std::map<std::string, int>, double> cache_;
};

// Solves one group's knapsack; an empty group yields an empty assignment.
bool SolveGroup(const SensitivityTable& table,
                const std::vector<LayerCost>& group, TensorKind kind,
                int64_t budget, std::map<std::string, int>* bits) {
  if (group.empty()) return true;
  const MckpInstance inst = BuildInstance(table, group, kind, budget);
  if (inst.MinCost() > budget) return false;
  const MckpSolution sol = SolveMckp(inst);
  for (size_t i = 0; i < group.size(); ++i) (*bits)[group[i].id] = sol.bits[i];
  return true;
}

std::string BitsToJson(int bits) {
  return bits == kFpBits ? "FP" : std::to_string(bits);
}

int BitsFromJson(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "FP") return kFpBits;
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_string()) return std::stoi(j.get<std::string>());
  throw Error(ErrorCode::kValidation, "bad bit width in config");
}

}  // namespace

void MckpInstance::Validate() const {
  for (const auto& item : items) {
    if (item.options.empty()) {
      throw Error(ErrorCode::kInvalidParameter,
                  "item " + item.layer_id + " has no options");
    }
    std::set<int> seen;
    for (const auto& o : item.options) {
      if (o.cost <= 0) {
        throw Error(ErrorCode::kInvalidParameter,
                    "item " + item.layer_id + " has a non-positive cost");
      }
      if (!std::isfinite(o.score)) {
        throw Error(ErrorCode::kInvalidParameter,
                    "item " + item.layer_id + " has a non-finite score");
      }
      if (!seen.insert(o.bits).second) {
        throw Error(ErrorCode::kInvalidParameter,
                    "item " + item.layer_id + " repeats a bit width");
      }
    }
  }
}

int64_t MckpInstance::MinCost() const {
  int64_t total = 0;
  for (const auto& item : items) {
    int64_t cheapest = std::numeric_limits<int64_t>::max();
    for (const auto& o : item.options) cheapest = std::min(cheapest, o.cost);
    total += cheapest;
  }
  return total;
}

MckpSolution EvaluateChoice(const MckpInstance& inst,
                            const std::vector<int>& bits) {
  MckpSolution sol;
  sol.bits = bits;
  for (size_t i = 0; i < inst.items.size(); ++i) {
    const MckpOption& o = OptionFor(inst.items[i], bits.at(i));
    sol.objective += o.score;
    sol.cost += o.cost;
  }
  return sol;
}

bool PreferSolution(const MckpInstance& inst, const MckpSolution& a,
                    const MckpSolution& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.cost != b.cost) return a.cost < b.cost;
  std::vector<size_t> order(inst.items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return inst.items[x].layer_id < inst.items[y].layer_id;
  });
  for (size_t i : order) {
    if (a.bits[i] != b.bits[i]) return a.bits[i] < b.bits[i];
  }
  return false;
}

MckpSolution SolveMckp(const MckpInstance& inst) {
  inst.Validate();
  ThrowIfInfeasible(inst);
  if (inst.items.empty()) return {};
  return BranchAndBound(inst).Solve();
}

MckpSolution SolveMckpDp(const MckpInstance& inst) {
  inst.Validate();
  ThrowIfInfeasible(inst);
  if (inst.items.empty()) return {};
  int64_t g = 0;
  for (const auto& item : inst.items) {
    for (const auto& o : item.options) g = std::gcd(g, o.cost);
  }
  const int64_t capacity = inst.budget / g;
  const size_t n = inst.items.size();
  if (static_cast<double>(capacity + 1) * static_cast<double>(n) >
      static_cast<double>(kMaxDpStates)) {
    throw Error(ErrorCode::kInvalidParameter,
                "instance too large for the DP cross-check");
  }
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  const size_t width = static_cast<size_t>(capacity) + 1;
  // value[c]: best objective with total cost exactly c * g.
  std::vector<double> value(width, kNone), next(width);
  std::vector<std::vector<int8_t>> pick(n, std::vector<int8_t>(width, -1));
  value[0] = 0.0;
  for (size_t i = 0; i < n; ++i) {
    std::fill(next.begin(), next.end(), kNone);
    const auto& opts = inst.items[i].options;
    for (size_t c = 0; c < width; ++c) {
      if (value[c] == kNone) continue;
      for (size_t o = 0; o < opts.size(); ++o) {
        const size_t nc = c + static_cast<size_t>(opts[o].cost / g);
        if (nc >= width) continue;
        const double v = value[c] + opts[o].score;
        if (v > next[nc]) {
          next[nc] = v;
          pick[i][nc] = static_cast<int8_t>(o);
        }
      }
    }
    value.swap(next);
  }
  size_t best_c = 0;
  for (size_t c = 0; c < width; ++c) {
    if (value[c] > value[best_c]) best_c = c;
  }
  std::vector<int> bits(n);
  size_t c = best_c;
  for (size_t i = n; i-- > 0;) {
    const MckpOption& o = inst.items[i].options[pick[i][c]];
    bits[i] = o.bits;
    c -= static_cast<size_t>(o.cost / g);
  }
  return EvaluateChoice(inst, bits);
}

int64_t ElementCount(const LayerCost& layer, TensorKind kind) {
  return kind == TensorKind::kWeight ? layer.param_count
                                     : layer.act_elem_count;
}

MckpInstance BuildInstance(const SensitivityTable& table,
                           const std::vector<LayerCost>& layers,
                           TensorKind kind, int64_t budget) {
  MckpInstance inst;
  inst.budget = budget;
  const std::vector<int> widths = table.BitWidths(kind);
  if (widths.empty()) {
    throw Error(ErrorCode::kValidation,
                std::string("sensitivity table has no ") + TensorKindName(kind) +
                    " entries");
  }
  for (const auto& l : layers) {
    MckpItem item{l.id, {}};
    for (int b : widths) {
      item.options.push_back({b, table.Find(l.id, kind, b).score,
                              b * ElementCount(l, kind)});
    }
    inst.items.push_back(std::move(item));
  }
  return inst;
}

std::pair<int64_t, int64_t> SplitBudget(int64_t total, int64_t content_mass,
                                        int64_t quality_mass, double k) {
  if (!(k > 0.0) || !std::isfinite(k)) {
    throw Error(ErrorCode::kInvalidParameter, "budget ratio K must be > 0");
  }
  if (content_mass < 0 || quality_mass < 0 ||
      content_mass + quality_mass == 0) {
    throw Error(ErrorCode::kInvalidParameter,
                "group parameter masses must be non-negative, not both zero");
  }
  const long double weighted = static_cast<long double>(k) * content_mass;
  const long double share = weighted / (weighted + quality_mass);
  const int64_t content =
      static_cast<int64_t>(std::floor(static_cast<long double>(total) * share));
  return {content, total - content};
}

CostSummary ComputeCostSummary(const QuantConfig& config,
                               const std::vector<LayerCost>& layers) {
  CostSummary s;
  int64_t params = 0, acts = 0, act_bits = 0;
  for (const auto& l : layers) {
    const LayerBits& b = config.at(l.id);
    params += l.param_count;
    acts += l.act_elem_count;
    act_bits += b.act_bits * l.act_elem_count;
    s.storage_bits += b.weight_bits * l.param_count;
    // A multiply with an FP operand runs in FP after dequantization.
    const bool fp = b.weight_bits == kFpBits || b.act_bits == kFpBits;
    s.bops += l.mac_count * (fp ? kFpBits * kFpBits : b.weight_bits * b.act_bits);
    s.fp16_storage_bits += kFpBits * l.param_count;
    s.fp16_bops += l.mac_count * kFpBits * kFpBits;
  }
  if (params == 0 || acts == 0) {
    throw Error(ErrorCode::kInvalidParameter, "cost summary of an empty model");
  }
  s.avg_weight_bits = static_cast<double>(s.storage_bits) / params;
  s.avg_act_bits = static_cast<double>(act_bits) / acts;
  s.storage_opt_ratio = static_cast<double>(s.fp16_storage_bits) / s.storage_bits;
  s.compute_opt_ratio = static_cast<double>(s.fp16_bops) / s.bops;
  return s;
}

nlohmann::ordered_json BitWidthConfigToJson(const BitWidthConfig& config) {
  nlohmann::ordered_json j;
  j["format"] = "mpq-config-v1";
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& [id, b] : config.bits.bits()) {
    layers.push_back({{"id", id},
                      {"weight_bits", BitsToJson(b.weight_bits)},
                      {"act_bits", BitsToJson(b.act_bits)}});
  }
  j["layers"] = std::move(layers);
  j["fp_retained"] = config.fp_retained;
  const CostSummary& s = config.summary;
  j["summary"] = {{"avg_weight_bits", s.avg_weight_bits},
                  {"avg_act_bits", s.avg_act_bits},
                  {"storage_bits", s.storage_bits},
                  {"bops", s.bops},
                  {"storage_opt_ratio", s.storage_opt_ratio},
                  {"compute_opt_ratio", s.compute_opt_ratio}};
  j["score"] = config.score;
  return j;
}

BitWidthConfig BitWidthConfigFromJson(const nlohmann::json& j) {
  BitWidthConfig config;
  try {
    std::map<std::string, LayerBits> bits;
    for (const auto& e : j.at("layers")) {
      const std::string id = e.at("id").get<std::string>();
      if (!bits.emplace(id, LayerBits{BitsFromJson(e.at("weight_bits")),
                                      BitsFromJson(e.at("act_bits"))})
               .second) {
        throw Error(ErrorCode::kValidation, "config repeats layer " + id);
      }
    }
    config.bits = QuantConfig(std::move(bits));
    for (const auto& id : j.value("fp_retained", nlohmann::json::array())) {
      config.fp_retained.insert(id.get<std::string>());
    }
    if (j.contains("summary")) {
      const auto& s = j["summary"];
      config.summary.avg_weight_bits = s.at("avg_weight_bits").get<double>();
      config.summary.avg_act_bits = s.at("avg_act_bits").get<double>();
      config.summary.storage_bits = s.at("storage_bits").get<int64_t>();
      config.summary.bops = s.at("bops").get<int64_t>();
      config.summary.storage_opt_ratio = s.at("storage_opt_ratio").get<double>();
      config.summary.compute_opt_ratio = s.at("compute_opt_ratio").get<double>();
    }
    config.score = j.value("score", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                std::string("malformed bit-width config: ") + e.what());
  }
  return config;
}

std::set<std::string> RetainFp(const SensitivityTable& table, double fraction,
                               std::optional<TensorKind> kind) {
  if (!(fraction >= 0.0) || fraction >= 1.0) {
    throw Error(ErrorCode::kInvalidParameter,
                "retained fraction must be in [0, 1)");
  }
  const std::vector<RankedLayer> ranked = RankLongTail(table, kind);
  std::set<std::string> ids;
  for (const auto& r : ranked) ids.insert(r.layer_id);
  const size_t count = static_cast<size_t>(
      std::ceil(fraction * static_cast<double>(ids.size()) - 1e-12));
  std::set<std::string> retained;
  for (const auto& r : ranked) {
    if (retained.size() >= count) break;
    retained.insert(r.layer_id);
  }
  return retained;
}

double AverageBits(const std::map<std::string, int>& bits,
                   const std::vector<LayerCost>& layers, TensorKind kind) {
  int64_t weighted = 0, total = 0;
  for (const auto& l : layers) {
    auto it = bits.find(l.id);
    const int b = it == bits.end() ? kFpBits : it->second;
    weighted += b * ElementCount(l, kind);
    total += ElementCount(l, kind);
  }
  return total == 0 ? 0.0 : static_cast<double>(weighted) / total;
}

namespace {

// Raises single layers one candidate step at a time, largest table gain
// first, until the allocation costs at least `floor` or nothing fits.
void TopUp(const SensitivityTable& table, const std::vector<LayerCost>& layers,
           TensorKind kind, int64_t floor, int64_t budget,
           std::map<std::string, int>* bits) {
  int64_t cost = 0;
  for (const auto& l : layers) {
    auto it = bits->find(l.id);
    if (it != bits->end()) cost += it->second * ElementCount(l, kind);
  }
  while (cost < floor) {
    const LayerCost* pick = nullptr;
    int pick_bits = 0;
    double pick_gain = 0.0;
    int64_t pick_extra = 0;
    for (const auto& l : layers) {
      auto it = bits->find(l.id);
      if (it == bits->end() || it->second >= 8) continue;
      const int next = it->second * 2;
      const int64_t extra = (next - it->second) * ElementCount(l, kind);
      if (cost + extra > budget) continue;
      const double gain = table.Find(l.id, kind, next).score -
                          table.Find(l.id, kind, it->second).score;
      if (!pick || gain > pick_gain ||
          (gain == pick_gain && extra < pick_extra)) {
        pick = &l;
        pick_bits = next;
        pick_gain = gain;
        pick_extra = extra;
      }
    }
    if (!pick) break;
    (*bits)[pick->id] = pick_bits;
    cost += pick_extra;
  }
}

}  // namespace

KindAllocation AllocateKind(const SensitivityTable& table,
                            const std::vector<LayerCost>& layers,
                            TensorKind kind, double target_avg_bits,
                            const std::set<std::string>& retained,
                            const AllocateOptions& options,
                            const ProxyScore& proxy) {
  if (!(target_avg_bits >= 2.0 && target_avg_bits <= 8.0)) {
    throw Error(ErrorCode::kInvalidParameter,
                "target average bits must lie in [2, 8]");
  }
  if (options.budget_points < 1 || options.ratio_points < 1) {
    throw Error(ErrorCode::kInvalidParameter, "sweep needs at least one point");
  }
  const std::vector<LayerCost> content =
      FilterGroup(layers, LayerGroup::kContent, retained);
  const std::vector<LayerCost> quality =
      FilterGroup(layers, LayerGroup::kQuality, retained);
  const int64_t total_elems = SumElements(layers, kind);
  const int64_t content_mass = SumElements(content, kind);
  const int64_t quality_mass = SumElements(quality, kind);
  const int64_t retained_cost =
      kFpBits * (total_elems - content_mass - quality_mass);

  const int64_t budget_all =
      static_cast<int64_t>(std::floor(static_cast<long double>(target_avg_bits) *
                                      total_elems)) -
      retained_cost;
  const int64_t min_cost = 2 * (content_mass + quality_mass);
  if (budget_all < min_cost) {
    const double min_avg =
        static_cast<double>(min_cost + retained_cost) / total_elems;
    throw InfeasibleError("target " + std::to_string(target_avg_bits) +
                              " average bits is below the minimum achievable " +
                              std::to_string(min_avg),
                          min_avg);
  }
  const int64_t window = static_cast<int64_t>(
      std::floor(options.budget_window_bits * static_cast<double>(total_elems)));
  const int64_t budget_floor =
      static_cast<int64_t>(std::ceil(
          static_cast<long double>(target_avg_bits - options.budget_window_bits) *
          total_elems)) -
      retained_cost;
  const bool weights = kind == TensorKind::kWeight;
  const std::vector<double> ratios =
      Linspace(weights ? options.weight_ratio_lo : options.act_ratio_lo,
               weights ? options.weight_ratio_hi : options.act_ratio_hi,
               options.ratio_points);

  ScoreCache score(proxy, kind);
  KindAllocation result;
  const SweepCell* best = nullptr;
  const int m = options.budget_points;
  for (int j = 0; j < m; ++j) {
    const int64_t back = m == 1 ? 0 : window * (m - 1 - j) / (m - 1);
    const int64_t budget = budget_all - back;
    for (double k : ratios) {
      SweepCell cell;
      cell.budget = budget;
      cell.ratio = k;
      if (budget >= min_cost) {
        auto [bc, bq] = content_mass == 0   ? std::pair<int64_t, int64_t>{0, budget}
                        : quality_mass == 0 ? std::pair<int64_t, int64_t>{budget, 0}
                                            : SplitBudget(budget, content_mass,
                                                          quality_mass, k);
        // A group cannot use more than its all-8-bit cost; hand the excess
        // to the other group. Likewise cover a group's all-2-bit floor from
        // the other group's surplus.
        const int64_t c_max = 8 * content_mass, q_max = 8 * quality_mass;
        const int64_t c_min = 2 * content_mass, q_min = 2 * quality_mass;
        if (bc > c_max) { bq += bc - c_max; bc = c_max; }
        if (bq > q_max) { bc += bq - q_max; bq = q_max; }
        if (bc < c_min) { bq -= c_min - bc; bc = c_min; }
        if (bq < q_min) { bc -= q_min - bq; bq = q_min; }
        if (bc >= c_min && bq >= q_min) {
          cell.feasible = SolveGroup(table, content, kind, bc, &cell.bits) &&
                          SolveGroup(table, quality, kind, bq, &cell.bits);
        }
      }
      if (cell.feasible) {
        TopUp(table, layers, kind, budget_floor, budget, &cell.bits);
        cell.avg_bits = AverageBits(cell.bits, layers, kind);
        cell.score = score(cell.bits);
      }
      result.cells.push_back(std::move(cell));
    }
  }
  // Cells inside the budget window win over cells that could not reach it.
  const double lowest = target_avg_bits - options.budget_window_bits;
  auto in_window = [&](const SweepCell& c) { return c.avg_bits >= lowest; };
  for (const SweepCell& cell : result.cells) {
    if (!cell.feasible) continue;
    if (!best || (in_window(cell) && !in_window(*best)) ||
        (in_window(cell) == in_window(*best) && cell.score > best->score)) {
      best = &cell;
    }
  }
  if (!best) {
    throw InfeasibleError("no sweep cell admits a feasible allocation",
                          static_cast<double>(min_cost + retained_cost) /
                              total_elems);
  }
  result.bits = best->bits;
  result.score = best->score;
  result.avg_bits = best->avg_bits;
  return result;
}

BitWidthConfig Allocate(const SensitivityTable& table,
                        const std::vector<LayerCost>& layers,
                        const AllocationTarget& target,
                        const AllocateOptions& options,
                        const ProxyScore& proxy) {
  if (!target.weight_bits && !target.act_bits) {
    throw Error(ErrorCode::kInvalidParameter, "no allocation target given");
  }
  const TensorKind retain_kind =
      target.weight_bits ? TensorKind::kWeight : TensorKind::kActivation;
  for (TensorKind kind : {TensorKind::kWeight, TensorKind::kActivation}) {
    const bool wanted = kind == TensorKind::kWeight ? target.weight_bits.has_value()
                                                    : target.act_bits.has_value();
    if (wanted) table.Validate(layers, /*enforce_metric=*/false);
    if (wanted && !table.HasKind(kind)) {
      throw Error(ErrorCode::kValidation,
                  std::string("sensitivity table has no ") +
                      TensorKindName(kind) + " entries");
    }
  }

  BitWidthConfig config;
  config.fp_retained =
      options.retain_fraction > 0.0
          ? RetainFp(table, options.retain_fraction, retain_kind)
          : std::set<std::string>{};
  std::vector<std::string> ids;
  for (const auto& l : layers) ids.push_back(l.id);
  config.bits = QuantConfig::AllFp(ids);

  std::optional<double> weight_score, act_score;
  if (target.weight_bits) {
    const KindAllocation a =
        AllocateKind(table, layers, TensorKind::kWeight, *target.weight_bits,
                     config.fp_retained, options, proxy);
    for (const auto& [id, b] : a.bits) config.bits[id].weight_bits = b;
    weight_score = a.score;
  }
  if (target.act_bits) {
    const KindAllocation a =
        AllocateKind(table, layers, TensorKind::kActivation, *target.act_bits,
                     config.fp_retained, options, proxy);
    for (const auto& [id, b] : a.bits) config.bits[id].act_bits = b;
    act_score = a.score;
  }
  config.summary = ComputeCostSummary(config.bits, layers);
  config.score = weight_score ? *weight_score : *act_score;
  return config;
}

std::vector<SweepCell> SweepGrid(const SensitivityTable& table,
                                 const std::vector<LayerCost>& layers,
                                 TensorKind kind, double lo, double hi,
                                 int points, const ProxyScore& proxy) {
  if (!(lo >= 2.0) || !(hi <= 8.0) || lo > hi || points < 1) {
    throw Error(ErrorCode::kInvalidParameter,
                "grid must satisfy 2 <= lo <= hi <= 8 with >= 1 point");
  }
  const std::vector<LayerCost> content =
      FilterGroup(layers, LayerGroup::kContent, {});
  const std::vector<LayerCost> quality =
      FilterGroup(layers, LayerGroup::kQuality, {});
  const int64_t content_mass = SumElements(content, kind);
  const int64_t quality_mass = SumElements(quality, kind);
  const std::vector<double> targets = Linspace(lo, hi, points);

  ScoreCache score(proxy, kind);
  std::vector<SweepCell> cells;
  for (double tc : targets) {
    for (double tq : targets) {
      SweepCell cell;
      cell.content_target_bits = tc;
      cell.quality_target_bits = tq;
      const auto bc = static_cast<int64_t>(std::floor(tc * content_mass));
      const auto bq = static_cast<int64_t>(std::floor(tq * quality_mass));
      cell.budget = bc + bq;
      cell.feasible = SolveGroup(table, content, kind, bc, &cell.bits) &&
                      SolveGroup(table, quality, kind, bq, &cell.bits);
      if (cell.feasible) {
        cell.avg_bits = AverageBits(cell.bits, layers, kind);
        cell.score = score(cell.bits);
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::map<std::string, int> NaiveSortingAllocation(
    const SensitivityTable& table, const std::vector<LayerCost>& layers,
    TensorKind kind, int64_t budget) {
  std::vector<RankedLayer> ranked = RankLongTail(table, kind);
  std::set<std::string> wanted;
  for (const auto& l : layers) wanted.insert(l.id);
  std::erase_if(ranked, [&](const RankedLayer& r) { return !wanted.count(r.layer_id); });
  // Least sensitive first.
  std::reverse(ranked.begin(), ranked.end());

  std::map<std::string, int64_t> elems;
  int64_t cost = 0;
  std::map<std::string, int> bits;
  for (const auto& l : layers) {
    bits[l.id] = 8;
    elems[l.id] = ElementCount(l, kind);
    cost += 8 * elems[l.id];
  }
  for (const auto& r : ranked) {
    for (int& b = bits[r.layer_id]; cost > budget && b > 2;) {
      const int lower = b / 2;
      cost -= (b - lower) * elems[r.layer_id];
      b = lower;
    }
  }
  if (cost > budget) {
    throw InfeasibleError("naive sorting cannot meet the budget",
                          static_cast<double>(cost));
  }
  return bits;
}

std::map<std::string, int> RandomAllocation(
    const std::vector<LayerCost>& layers, TensorKind kind, int64_t budget,
    RngSeed seed) {
  SplitMix64 rng(seed);
  std::map<std::string, int> bits;
  int64_t cost = 0;
  for (const auto& l : layers) {
    const int b = kCandidateBits[rng.NextBelow(3)];
    bits[l.id] = b;
    cost += b * ElementCount(l, kind);
  }
  int64_t floor_cost = 0;
  for (const auto& l : layers) floor_cost += 2 * ElementCount(l, kind);
  if (floor_cost > budget) {
    throw InfeasibleError("random allocation cannot meet the budget",
                          static_cast<double>(floor_cost));
  }
  while (cost > budget) {
    std::vector<const LayerCost*> demotable;
    for (const auto& l : layers) {
      if (bits[l.id] > 2) demotable.push_back(&l);
    }
    const LayerCost& l = *demotable[rng.NextBelow(demotable.size())];
    const int lower = bits[l.id] / 2;
    cost -= (bits[l.id] - lower) * ElementCount(l, kind);
    bits[l.id] = lower;
  }
  return bits;
}

bool Dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.avg_bits <= b.avg_bits && a.score >= b.score &&
         (a.avg_bits < b.avg_bits || a.score > b.score);
}

std::vector<ParetoPoint> ParetoFrontier(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(),
            [](const ParetoPoint& a, const ParetoPoint& b) {
              if (a.avg_bits != b.avg_bits) return a.avg_bits < b.avg_bits;
              if (a.score != b.score) return a.score > b.score;
              return a.index < b.index;
            });
  std::vector<ParetoPoint> frontier;
  for (const ParetoPoint& p : sorted) {
    if (frontier.empty() || p.score > frontier.back().score) {
      frontier.push_back(p);
    }
  }
  return frontier;
}

std::vector<double> Linspace(double lo, double hi, int points) {
  if (points < 1) return {};
  if (points == 1) return {hi};
  std::vector<double> out(static_cast<size_t>(points));
  for (int i = 0; i < points; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
  }
  out.back() = hi;
  return out;
}

}  // namespace mpq
