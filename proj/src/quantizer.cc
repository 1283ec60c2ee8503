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

#include "mpq/quantizer.h"

#include <algorithm>
#include <cmath>

#include "mpq/error.h"

namespace mpq {
namespace {

// Maps a flat element index to its slice index under `params`.
class SliceIndexer {
 public:
  SliceIndexer(const Shape& shape, const QuantParams& params) {
    if (params.granularity == Granularity::kPerTensor) {
      if (params.num_slices() != 1) {
        throw Error(ErrorCode::kShapeMismatch,
                    "per-tensor params must have one slice");
      }
      return;
    }
    if (params.channel_axis >= shape.size() ||
        shape[params.channel_axis] != params.num_slices()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "per-channel params with " +
                      std::to_string(params.num_slices()) +
                      " slices do not fit shape " + ShapeToString(shape));
    }
    channels_ = params.num_slices();
    inner_ = 1;
    for (size_t i = params.channel_axis + 1; i < shape.size(); ++i) {
      inner_ *= shape[i];
    }
  }

  size_t operator()(size_t flat) const {
    return channels_ == 1 ? 0 : (flat / inner_) % channels_;
  }

 private:
  size_t channels_ = 1;
  size_t inner_ = 1;
};

int64_t QuantizeValue(double x, double scale, int64_t zero_point,
                      int64_t max_code) {
  const double q = RoundHalfAway(x / scale) + static_cast<double>(zero_point);
  return static_cast<int64_t>(std::clamp(q, 0.0, static_cast<double>(max_code)));
}

}  // namespace

bool IsSupportedBitWidth(int bits) {
  return bits == 2 || bits == 4 || bits == 8;
}

const char* GranularityName(Granularity g) {
  return g == Granularity::kPerTensor ? "per_tensor" : "per_output_channel";
}

const char* TensorKindName(TensorKind kind) {
  return kind == TensorKind::kWeight ? "weight" : "activation";
}

TensorKind ParseTensorKind(const std::string& name) {
  if (name == "weight") return TensorKind::kWeight;
  if (name == "activation") return TensorKind::kActivation;
  throw Error(ErrorCode::kInvalidParameter, "unknown tensor kind '" + name + "'");
}

double RoundHalfAway(double x) { return std::round(x); }

void QuantParams::Validate() const {
  if (!IsSupportedBitWidth(bit_width)) {
    throw Error(ErrorCode::kInvalidParameter,
                "bit width " + std::to_string(bit_width) + " not in {2,4,8}");
  }
  if (scales.empty() || scales.size() != zero_points.size()) {
    throw Error(ErrorCode::kInvalidParameter,
                "scales and zero points must be non-empty and paired");
  }
  if (granularity == Granularity::kPerTensor && scales.size() != 1) {
    throw Error(ErrorCode::kInvalidParameter,
                "per-tensor params must have exactly one slice");
  }
  for (size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
      throw Error(ErrorCode::kInvalidParameter, "scale must be positive");
    }
    if (zero_points[i] < 0 || zero_points[i] > MaxCode(bit_width)) {
      throw Error(ErrorCode::kInvalidParameter, "zero point out of range");
    }
  }
}

nlohmann::ordered_json QuantParamsToJson(const QuantParams& params,
                                         const std::string& layer_id,
                                         TensorKind kind) {
  nlohmann::ordered_json j;
  j["layer_id"] = layer_id;
  j["tensor_kind"] = TensorKindName(kind);
  j["bit_width"] = params.bit_width;
  j["granularity"] = GranularityName(params.granularity);
  if (params.granularity == Granularity::kPerOutputChannel) {
    j["channel_axis"] = params.channel_axis;
  }
  j["scales"] = params.scales;
  j["zero_points"] = params.zero_points;
  return j;
}

QuantParams QuantParamsFromJson(const nlohmann::json& j) {
  QuantParams p;
  try {
    p.bit_width = j.at("bit_width").get<int>();
    const std::string g = j.at("granularity").get<std::string>();
    if (g == "per_tensor") {
      p.granularity = Granularity::kPerTensor;
    } else if (g == "per_output_channel") {
      p.granularity = Granularity::kPerOutputChannel;
      p.channel_axis = j.value("channel_axis", size_t{0});
    } else {
      throw Error(ErrorCode::kValidation, "unknown granularity '" + g + "'");
    }
    p.scales = j.at("scales").get<std::vector<double>>();
    p.zero_points = j.at("zero_points").get<std::vector<int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                std::string("malformed quant params: ") + e.what());
  }
  p.Validate();
  return p;
}

QuantParams ParamsFromRanges(const std::vector<MinMax>& ranges, int bits,
                             Granularity granularity, size_t channel_axis) {
  if (!IsSupportedBitWidth(bits)) {
    throw Error(ErrorCode::kInvalidParameter,
                "bit width " + std::to_string(bits) + " not in {2,4,8}");
  }
  QuantParams p;
  p.bit_width = bits;
  p.granularity = granularity;
  p.channel_axis = channel_axis;
  const double levels = static_cast<double>(MaxCode(bits));
  for (const MinMax& r : ranges) {
    if (!std::isfinite(r.min) || !std::isfinite(r.max)) {
      throw Error(ErrorCode::kInvalidInput, "non-finite calibration range");
    }
    if (r.max == r.min) {
      p.scales.push_back(1.0);
      p.zero_points.push_back(0);
      continue;
    }
    const double lo = std::min(r.min, 0.0);
    const double hi = std::max(r.max, 0.0);
    const double scale = (hi - lo) / levels;
    const double z = std::clamp(RoundHalfAway(-lo / scale), 0.0, levels);
    p.scales.push_back(scale);
    p.zero_points.push_back(static_cast<int64_t>(z));
  }
  p.Validate();
  return p;
}

QuantParams CalibrateMinMax(const Tensor& t, int bits, Granularity granularity,
                            std::optional<size_t> channel_axis) {
  const bool per_channel = granularity == Granularity::kPerOutputChannel;
  if (per_channel != channel_axis.has_value()) {
    throw Error(ErrorCode::kInvalidParameter,
                "channel_axis is required exactly for per-channel granularity");
  }
  return ParamsFromRanges(ReduceMinMax(t, channel_axis), bits, granularity,
                          channel_axis.value_or(0));
}

IntTensor Quantize(const Tensor& t, const QuantParams& params) {
  const SliceIndexer slice(t.shape(), params);
  const int64_t max_code = MaxCode(params.bit_width);
  IntTensor qt{t.shape(), std::vector<int64_t>(t.size()), params};
  for (size_t i = 0; i < t.size(); ++i) {
    const size_t c = slice(i);
    qt.codes[i] = QuantizeValue(t[i], params.scales[c], params.zero_points[c],
                                max_code);
  }
  return qt;
}

Tensor Dequantize(const IntTensor& qt) {
  const SliceIndexer slice(qt.shape, qt.params);
  std::vector<double> out(qt.codes.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const size_t c = slice(i);
    out[i] = static_cast<double>(qt.codes[i] - qt.params.zero_points[c]) *
             qt.params.scales[c];
  }
  return Tensor(qt.shape, std::move(out));
}

Tensor FakeQuant(const Tensor& t, const QuantParams& params) {
  // Same arithmetic as Dequantize(Quantize(t)) without the code buffer.
  const SliceIndexer slice(t.shape(), params);
  const int64_t max_code = MaxCode(params.bit_width);
  std::vector<double> out(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    const size_t c = slice(i);
    const int64_t q = QuantizeValue(t[i], params.scales[c],
                                    params.zero_points[c], max_code);
    out[i] = static_cast<double>(q - params.zero_points[c]) * params.scales[c];
  }
  return Tensor(t.shape(), std::move(out));
}

BosSplit SplitBos(const Tensor& embedding) {
  if (embedding.rank() != 2 || embedding.dim(0) < 2) {
    throw Error(ErrorCode::kInvalidInput,
                "BOS split needs a [tokens >= 2, channels] embedding, got " +
                    ShapeToString(embedding.shape()));
  }
  return BosSplit{SliceRows(embedding, 0, 1),
                  SliceRows(embedding, 1, embedding.dim(0))};
}

size_t BosCache::stored_values(const std::string& layer_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(layer_id);
  return it == entries_.end() ? 0 : it->second.size();
}

size_t BosCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

BosAwareOutput BosAwareLinear(const Tensor& embedding, const Tensor& weight,
                              const std::optional<QuantParams>& weight_params,
                              const std::optional<QuantParams>& act_params,
                              BosCache* cache, const std::string& layer_id) {
  const BosSplit split = SplitBos(embedding);
  auto compute_bos = [&] { return MatMulTransposed(split.bos_feature, weight); };
  const Tensor bos_out =
      cache ? cache->GetOrCompute(layer_id, compute_bos) : compute_bos();

  const Tensor rest = act_params ? FakeQuant(split.rest, *act_params)
                                 : split.rest;
  const Tensor w = weight_params ? FakeQuant(weight, *weight_params) : weight;

  BosAwareOutput result{Concat(bos_out, MatMulTransposed(rest, w), 0)};
  if (act_params && act_params->granularity == Granularity::kPerTensor) {
    const double s = act_params->scales[0];
    const double z = static_cast<double>(act_params->zero_points[0]);
    const double lo = (0.0 - z) * s - 0.5 * s;
    const double hi = (static_cast<double>(MaxCode(act_params->bit_width)) - z) *
                          s + 0.5 * s;
    const MinMax bos = ReduceMinMax(split.bos_feature)[0];
    const MinMax body = ReduceMinMax(split.rest)[0];
    const double bos_abs = std::max(std::abs(bos.min), std::abs(bos.max));
    const double body_abs = std::max(std::abs(body.min), std::abs(body.max));
    result.calibration_mismatch =
        bos_abs > body_abs && bos.min >= lo && bos.max <= hi;
  }
  return result;
}

}  // namespace mpq
