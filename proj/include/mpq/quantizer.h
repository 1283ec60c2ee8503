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

// Asymmetric min-max integer quantization.
//
// Codes live in the unsigned range [0, 2^b - 1]:
//   q     = clamp(round(x / s) + z, 0, 2^b - 1)
//   x_hat = (q - z) * s
// with round() rounding half away from zero.

#ifndef MPQ_QUANTIZER_H_
#define MPQ_QUANTIZER_H_

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpq/tensor.h"

namespace mpq {

inline constexpr int kCandidateBits[] = {2, 4, 8};

bool IsSupportedBitWidth(int bits);
inline int64_t MaxCode(int bits) { return (int64_t{1} << bits) - 1; }

enum class Granularity { kPerTensor, kPerOutputChannel };

enum class TensorKind { kWeight, kActivation };

const char* GranularityName(Granularity g);
const char* TensorKindName(TensorKind kind);
TensorKind ParseTensorKind(const std::string& name);

struct QuantParams {
  int bit_width = 8;
  Granularity granularity = Granularity::kPerTensor;
  // Axis the per-channel scales index; unused for per-tensor params.
  size_t channel_axis = 0;
  std::vector<double> scales;
  std::vector<int64_t> zero_points;

  // Throws kInvalidParameter if any invariant is violated.
  void Validate() const;
  size_t num_slices() const { return scales.size(); }
};

// Serialized form: {layer_id, tensor_kind, bit_width, granularity, scales[],
// zero_points[]}.
nlohmann::ordered_json QuantParamsToJson(const QuantParams& params,
                                         const std::string& layer_id,
                                         TensorKind kind);
QuantParams QuantParamsFromJson(const nlohmann::json& j);

struct IntTensor {
  Shape shape;
  std::vector<int64_t> codes;
  QuantParams params;
};

// Per-slice scale and zero point from observed ranges. A slice whose range
// is a single value gets s = 1, z = 0. Otherwise the range is widened to
// include zero so the zero point never needs clamping.
QuantParams ParamsFromRanges(const std::vector<MinMax>& ranges, int bits,
                             Granularity granularity, size_t channel_axis);

QuantParams CalibrateMinMax(const Tensor& t, int bits, Granularity granularity,
                            std::optional<size_t> channel_axis = std::nullopt);

IntTensor Quantize(const Tensor& t, const QuantParams& params);
Tensor Dequantize(const IntTensor& qt);
Tensor FakeQuant(const Tensor& t, const QuantParams& params);

// Round half away from zero, independent of the FP rounding mode.
double RoundHalfAway(double x);

// ----- BOS-aware text embedding quantization -----

struct BosSplit {
  Tensor bos_feature;  // [1, channels]
  Tensor rest;         // [tokens - 1, channels]
};

BosSplit SplitBos(const Tensor& embedding);

// Write-once cache of full-precision BOS outputs, keyed by layer id. Each
// entry holds exactly out_channels values.
class BosCache {
 public:
  template <typename Compute>
  Tensor GetOrCompute(const std::string& layer_id, Compute&& compute) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(layer_id);
    if (it == entries_.end()) {
      it = entries_.emplace(layer_id, compute()).first;
    }
    return it->second;
  }

  size_t stored_values(const std::string& layer_id) const;
  size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Tensor> entries_;
};

struct BosAwareOutput {
  Tensor output;
  // True when the activation params cover the BOS row's range, which means
  // they were calibrated with the outlier included.
  bool calibration_mismatch = false;
};

// Linear layer over a token x channel embedding where the BOS row bypasses
// quantization: row 0 is the full-precision product (cached under
// `layer_id` when a cache is given), rows 1.. use fake-quantized rest rows
// and weights. `act_params`/`weight_params` may be absent for FP.
BosAwareOutput BosAwareLinear(const Tensor& embedding, const Tensor& weight,
                              const std::optional<QuantParams>& weight_params,
                              const std::optional<QuantParams>& act_params,
                              BosCache* cache = nullptr,
                              const std::string& layer_id = "");

}  // namespace mpq

#endif  // MPQ_QUANTIZER_H_
