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

// A small conditional UNet with the layer taxonomy of a text-to-image
// diffusion backbone: sinusoidal time embedding MLP, conv_in, residual conv
// blocks, a transformer block (self-attention, cross-attention on the text
// embedding, FFN) per encoder stage, strided downsampling, nearest
// upsampling, channel-concatenated skip connections and conv_out.
//
// Every quantizable layer is a bias-free linear or convolution. Norms and
// nonlinearities stay in floating point. One forward call is one denoising
// step and returns a tensor with the latent's shape.

#ifndef MPQ_TOY_MODEL_H_
#define MPQ_TOY_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpq/layers.h"
#include "mpq/quantizer.h"
#include "mpq/tensor.h"

namespace mpq {

struct ModelSpec {
  uint64_t seed = 0;
  size_t width = 16;  // Base channel count; multiple of 4, at least 8.
  size_t depth = 1;   // Encoder/decoder stages.
  size_t latent_channels = 4;
  size_t latent_size = 8;  // Square spatial extent; divisible by 2^depth.
  size_t tokens = 8;
  size_t text_dim = 32;

  static constexpr size_t kMinWidth = 8;
  void Validate() const;
};

struct LayerDescriptor {
  std::string id;
  LayerKind kind = LayerKind::kConv;
  LayerGroup group = LayerGroup::kQuality;
  int64_t param_count = 0;
  int64_t act_elem_count = 0;
  int64_t mac_count = 0;
  // [out, in, k, k] for convolutions, [out, in] for linear layers.
  Tensor weight;
  size_t kernel = 0;  // 0 for linear layers.
  size_t stride = 1;
  // Channels in the first half of a concatenated skip input; 0 when the
  // input is not a concatenation.
  size_t split_channels = 0;

  bool is_conv() const { return kernel > 0; }
  LayerCost cost() const;
};

class Model {
 public:
  Model(ModelSpec spec, std::vector<LayerDescriptor> layers);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<LayerDescriptor>& layers() const { return layers_; }
  const LayerDescriptor& layer(const std::string& id) const;
  size_t index_of(const std::string& id) const;
  std::vector<std::string> layer_ids() const;
  std::vector<LayerCost> costs() const;

  // Replaces every weight, keeping geometry. Shapes must match.
  Model WithWeights(const std::vector<Tensor>& weights) const;

 private:
  ModelSpec spec_;
  std::vector<LayerDescriptor> layers_;
  std::map<std::string, size_t> index_;
};

Model BuildToyUnet(const ModelSpec& spec);

struct ModelInput {
  Tensor latent;     // [latent_channels, latent_size, latent_size]
  Tensor embedding;  // [tokens, text_dim]
  double timestep = 0.0;
};

inline constexpr double kDefaultBosMagnitude = 800.0;
inline constexpr double kDefaultBodyMagnitude = 12.0;

// Token x channel text embedding. Row 0 is a fixed BOS feature (independent
// of the seed) whose max magnitude is bos_magnitude; each other row has max
// magnitude within [0.8, 1.25] x body_magnitude.
Tensor SynthTextEmbedding(RngSeed seed, size_t tokens, size_t channels,
                          double bos_magnitude = kDefaultBosMagnitude,
                          double body_magnitude = kDefaultBodyMagnitude);

// Deterministic inputs for a model: latent ~ N(0, 1), synthetic embedding,
// timestep uniform in [0, 1000).
std::vector<ModelInput> MakeInputs(const ModelSpec& spec, RngSeed seed,
                                   size_t count);

// Observed input ranges of every layer over a calibration batch.
struct ActivationRange {
  // One range per input part: two for concatenated skip inputs (the two
  // halves), one otherwise.
  std::vector<MinMax> parts;
  // Range of rows 1.. for layers that consume the text embedding.
  std::optional<MinMax> non_bos;
};

class ActivationStats {
 public:
  void Observe(const LayerDescriptor& layer, const Tensor& input);
  const ActivationRange& at(const std::string& layer_id) const;
  bool contains(const std::string& layer_id) const {
    return ranges_.count(layer_id) > 0;
  }
  const std::map<std::string, ActivationRange>& ranges() const {
    return ranges_;
  }

 private:
  std::map<std::string, ActivationRange> ranges_;
};

struct LayerTrace {
  const LayerDescriptor* layer = nullptr;
  const Tensor* input = nullptr;
  int64_t macs = 0;
};

using LayerObserver = std::function<void(const LayerTrace&)>;

struct ForwardOptions {
  // Null runs the plain floating-point network with no hooks.
  const QuantConfig* config = nullptr;
  // Route cross-attention to_k/to_v through the BOS-aware linear.
  bool bos_aware = false;
  // Static activation ranges. Null calibrates each activation on the fly.
  const ActivationStats* act_stats = nullptr;
  BosCache* bos_cache = nullptr;
  LayerObserver observer;
};

Tensor Forward(const Model& model, const ModelInput& input,
               const ForwardOptions& options = {});

Tensor Forward(const Model& model, const Tensor& latent,
               const Tensor& embedding, double timestep,
               const QuantConfig& config, bool bos_aware);

// Runs the FP network over `inputs`, accumulating running min/max per layer
// input.
ActivationStats CalibrateActivations(const Model& model,
                                     const std::vector<ModelInput>& inputs);

// Model description: spec, layer list with cost fields and geometry, and the
// checksum of the weight container file.
nlohmann::ordered_json ModelToJson(const Model& model,
                                   const std::string& weights_file,
                                   const std::string& weights_sha256);

// Concatenated tensor containers, one per layer in model order.
std::string EncodeWeights(const Model& model);

// Writes `dir/model.json` and `dir/weights.bin`.
void SaveModel(const Model& model, const std::filesystem::path& dir);

// Rebuilds the architecture from the description, verifies the layer list
// and loads weights from the referenced file after checksum validation.
Model LoadModel(const std::filesystem::path& model_json);

}  // namespace mpq

#endif  // MPQ_TOY_MODEL_H_
