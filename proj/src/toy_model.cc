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

#include "mpq/toy_model.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mpq/error.h"
#include "mpq/tensor_io.h"

namespace mpq {
namespace {

constexpr size_t kNormGroups = 4;
constexpr size_t kFfnMultiplier = 2;
constexpr double kTextGain = 0.3;
constexpr double kSpikeDamping = kDefaultBodyMagnitude / kDefaultBosMagnitude;
constexpr double kCrossOutGain = 2.0;
constexpr double kNormEps = 1e-5;
constexpr char kModelFormat[] = "mpq-model-v1";
// Fixed stream for the BOS feature so it is identical for every prompt.
constexpr uint64_t kBosSeed = 0xb05b05b05ULL;

// BOS row pattern: Gaussian values with one dominant channel.
struct BosFeature {
  std::vector<double> row;
  size_t spike = 0;
};

BosFeature MakeBosFeature(size_t channels) {
  SplitMix64 rng(RngSeed{kBosSeed});
  BosFeature f;
  f.row.resize(channels);
  for (double& v : f.row) v = rng.NextGaussian();
  f.spike = rng.NextBelow(channels);
  return f;
}

// ----- Construction -----

class Builder {
 public:
  explicit Builder(const ModelSpec& spec) : root_(RngSeed{spec.seed}) {}

  void Linear(const std::string& id, LayerKind kind, size_t in, size_t out,
              size_t rows, double gain = 1.0) {
    LayerDescriptor d = Make(id, kind, {out, in}, in, gain);
    d.act_elem_count = static_cast<int64_t>(rows * in);
    d.mac_count = static_cast<int64_t>(rows * in * out);
    layers_.push_back(std::move(d));
  }

  void Conv(const std::string& id, LayerKind kind, size_t in, size_t out,
            size_t kernel, size_t stride, size_t spatial, size_t split = 0,
            double gain = 1.0) {
    LayerDescriptor d =
        Make(id, kind, {out, in, kernel, kernel}, in * kernel * kernel, gain);
    d.kernel = kernel;
    d.stride = stride;
    d.split_channels = split;
    const size_t pad = kernel / 2;
    const size_t out_spatial = (spatial + 2 * pad - kernel) / stride + 1;
    d.act_elem_count = static_cast<int64_t>(in * spatial * spatial);
    d.mac_count = static_cast<int64_t>(out * in * kernel * kernel *
                                       out_spatial * out_spatial);
    layers_.push_back(std::move(d));
  }

  // Scales one input column of the most recent linear layer.
  void ScaleInputColumn(size_t column, double factor) {
    Tensor& w = layers_.back().weight;
    std::vector<double> values = w.values();
    for (size_t r = 0; r < w.dim(0); ++r) values[r * w.dim(1) + column] *= factor;
    w = Tensor(w.shape(), std::move(values));
  }

  std::vector<LayerDescriptor> Take() { return std::move(layers_); }

 private:
  LayerDescriptor Make(const std::string& id, LayerKind kind, Shape shape,
                       size_t fan_in, double gain) {
    LayerDescriptor d;
    d.id = id;
    d.kind = kind;
    d.group = GroupOf(kind);
    const RngSeed seed{root_.Split(HashLabel(id)).NextU64()};
    d.weight = RandomNormal(shape, 0.0,
                            gain / std::sqrt(static_cast<double>(fan_in)), seed);
    d.param_count = static_cast<int64_t>(d.weight.size());
    return d;
  }

  SplitMix64 root_;
  std::vector<LayerDescriptor> layers_;
};

std::string StagePrefix(const char* path, size_t stage) {
  return std::string(path) + "." + std::to_string(stage);
}

// ----- Floating-point building blocks on [C, H, W] and [rows, dim] -----

double Silu(double x) { return x / (1.0 + std::exp(-x)); }

double Gelu(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

template <typename Fn>
Tensor Map(const Tensor& t, Fn fn) {
  std::vector<double> out(t.values());
  for (double& v : out) v = fn(v);
  return Tensor(t.shape(), std::move(out));
}

Tensor GroupNorm(const Tensor& x) {
  const size_t channels = x.dim(0);
  const size_t plane = x.size() / channels;
  const size_t per_group = channels / kNormGroups;
  std::vector<double> out(x.values());
  for (size_t g = 0; g < kNormGroups; ++g) {
    const size_t begin = g * per_group * plane;
    const size_t end = begin + per_group * plane;
    double mean = 0.0;
    for (size_t i = begin; i < end; ++i) mean += out[i];
    mean /= static_cast<double>(end - begin);
    double var = 0.0;
    for (size_t i = begin; i < end; ++i) var += (out[i] - mean) * (out[i] - mean);
    var /= static_cast<double>(end - begin);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    for (size_t i = begin; i < end; ++i) out[i] = (out[i] - mean) * inv;
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor LayerNorm(const Tensor& x) {
  const size_t rows = x.dim(0), dim = x.dim(1);
  std::vector<double> out(x.values());
  for (size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * dim;
    double mean = 0.0;
    for (size_t i = 0; i < dim; ++i) mean += row[i];
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (size_t i = 0; i < dim; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(dim);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    for (size_t i = 0; i < dim; ++i) row[i] = (row[i] - mean) * inv;
  }
  return Tensor(x.shape(), std::move(out));
}

// [C, H, W] -> [H*W, C] and back.
Tensor ToTokens(const Tensor& x) {
  const size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<double> out(x.size());
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t p = 0; p < hw; ++p) out[p * c + ch] = x[ch * hw + p];
  }
  return Tensor({hw, c}, std::move(out));
}

Tensor FromTokens(const Tensor& tokens, size_t h, size_t w) {
  const size_t hw = tokens.dim(0), c = tokens.dim(1);
  std::vector<double> out(tokens.size());
  for (size_t p = 0; p < hw; ++p) {
    for (size_t ch = 0; ch < c; ++ch) out[ch * hw + p] = tokens[p * c + ch];
  }
  return Tensor({c, h, w}, std::move(out));
}

Tensor Upsample2x(const Tensor& x) {
  const size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> out(c * 4 * h * w);
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t i = 0; i < 2 * h; ++i) {
      for (size_t j = 0; j < 2 * w; ++j) {
        out[(ch * 2 * h + i) * 2 * w + j] = x[(ch * h + i / 2) * w + j / 2];
      }
    }
  }
  return Tensor({c, 2 * h, 2 * w}, std::move(out));
}

Tensor AddChannelBias(const Tensor& x, const Tensor& bias) {
  const size_t c = x.dim(0), plane = x.size() / c;
  std::vector<double> out(x.values());
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t p = 0; p < plane; ++p) out[ch * plane + p] += bias[ch];
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor Conv2d(const Tensor& x, const Tensor& w, size_t stride) {
  const size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const size_t cout = w.dim(0), k = w.dim(2), pad = k / 2;
  const size_t ho = (h + 2 * pad - k) / stride + 1;
  const size_t wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(cout * ho * wo, 0.0);
  const double* xd = x.data().data();
  const double* wdata = w.data().data();
  for (size_t o = 0; o < cout; ++o) {
    double* plane = out.data() + o * ho * wo;
    for (size_t i = 0; i < cin; ++i) {
      const double* xin = xd + i * h * wd;
      for (size_t ky = 0; ky < k; ++ky) {
        for (size_t kx = 0; kx < k; ++kx) {
          const double weight = wdata[((o * cin + i) * k + ky) * k + kx];
          for (size_t oy = 0; oy < ho; ++oy) {
            const ptrdiff_t iy = static_cast<ptrdiff_t>(oy * stride + ky) -
                                 static_cast<ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<ptrdiff_t>(h)) continue;
            for (size_t ox = 0; ox < wo; ++ox) {
              const ptrdiff_t ix = static_cast<ptrdiff_t>(ox * stride + kx) -
                                   static_cast<ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<ptrdiff_t>(wd)) continue;
              plane[oy * wo + ox] += weight * xin[iy * wd + ix];
            }
          }
        }
      }
    }
  }
  return Tensor({cout, ho, wo}, std::move(out));
}

void SoftmaxRows(std::vector<double>* scores, size_t rows, size_t cols) {
  for (size_t r = 0; r < rows; ++r) {
    double* row = scores->data() + r * cols;
    const double peak = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - peak);
      sum += row[c];
    }
    for (size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
}

// softmax(q k^T / sqrt(d)) v, single head.
Tensor Attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const size_t nq = q.dim(0), nk = k.dim(0), d = q.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores = MatMulTransposed(q, k).values();
  for (double& s : scores) s *= scale;
  SoftmaxRows(&scores, nq, nk);
  std::vector<double> out(nq * v.dim(1), 0.0);
  for (size_t i = 0; i < nq; ++i) {
    for (size_t j = 0; j < nk; ++j) {
      const double a = scores[i * nk + j];
      for (size_t c = 0; c < v.dim(1); ++c) {
        out[i * v.dim(1) + c] += a * v[j * v.dim(1) + c];
      }
    }
  }
  return Tensor({nq, v.dim(1)}, std::move(out));
}

Tensor TimestepEmbedding(double t, size_t dim) {
  const size_t half = dim / 2;
  std::vector<double> out(dim);
  for (size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) /
                 static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return Tensor({1, dim}, std::move(out));
}

bool ConsumesTextEmbedding(LayerKind kind) {
  return kind == LayerKind::kCrossAttnToK || kind == LayerKind::kCrossAttnToV;
}

// Splits a layer input into its concatenated parts along the leading axis.
std::vector<Tensor> InputParts(const LayerDescriptor& layer,
                               const Tensor& input) {
  if (layer.split_channels == 0) return {input};
  return {SliceRows(input, 0, layer.split_channels),
          SliceRows(input, layer.split_channels, input.dim(0))};
}

MinMax Merge(const MinMax& a, const MinMax& b) {
  return {std::min(a.min, b.min), std::max(a.max, b.max)};
}

// ----- Forward pass -----

class Runner {
 public:
  Runner(const Model& model, const ForwardOptions& options)
      : model_(model), options_(options) {
    if (options_.config) options_.config->Validate(model_.layer_ids());
    if (options_.bos_aware && !options_.bos_cache) {
      options_.bos_cache = &local_cache_;
    }
  }

  Tensor Run(const ModelInput& input) {
    const ModelSpec& spec = model_.spec();
    const size_t w = spec.width;

    Tensor temb = Apply("time_embed.linear_1",
                        TimestepEmbedding(input.timestep, w));
    temb = Apply("time_embed.linear_2", Map(temb, Silu));

    Tensor h = Apply("conv_in", input.latent);
    std::vector<Tensor> skips;
    for (size_t s = 0; s < spec.depth; ++s) {
      const std::string prefix = StagePrefix("down", s);
      h = ResBlock(prefix + ".res", h, temb);
      h = Transformer(prefix + ".attn", h, input.embedding);
      skips.push_back(h);
      h = Apply(prefix + ".downsample", h);
    }
    h = ResBlock("mid.res", h, temb);
    for (size_t s = spec.depth; s-- > 0;) {
      const std::string prefix = StagePrefix("up", s);
      h = Apply(prefix + ".upsample", Upsample2x(h));
      const Tensor cat = Concat(h, skips[s], 0);
      Tensor r = Apply(prefix + ".res.conv1", Map(GroupNorm(cat), Silu));
      r = AddChannelBias(r, temb);
      r = Apply(prefix + ".res.conv2", Map(GroupNorm(r), Silu));
      h = Add(Apply(prefix + ".res.skip_proj", cat), r);
    }
    return Apply("conv_out", Map(GroupNorm(h), Silu));
  }

 private:
  Tensor ResBlock(const std::string& prefix, const Tensor& h,
                  const Tensor& temb) {
    Tensor r = Apply(prefix + ".conv1", Map(GroupNorm(h), Silu));
    r = AddChannelBias(r, temb);
    r = Apply(prefix + ".conv2", Map(GroupNorm(r), Silu));
    return Add(h, r);
  }

  Tensor Transformer(const std::string& prefix, const Tensor& h,
                     const Tensor& text) {
    Tensor x = ToTokens(h);

    Tensor n = LayerNorm(x);
    Tensor q = Apply(prefix + ".self.to_q", n);
    Tensor k = Apply(prefix + ".self.to_k", n);
    Tensor v = Apply(prefix + ".self.to_v", n);
    x = Add(x, Apply(prefix + ".self.to_out", Attention(q, k, v)));

    n = LayerNorm(x);
    q = Apply(prefix + ".cross.to_q", n);
    k = Apply(prefix + ".cross.to_k", text);
    v = Apply(prefix + ".cross.to_v", text);
    x = Add(x, Apply(prefix + ".cross.to_out", Attention(q, k, v)));

    n = LayerNorm(x);
    const Tensor hidden = Map(Apply(prefix + ".ffn.proj_in", n), Gelu);
    x = Add(x, Apply(prefix + ".ffn.proj_out", hidden));
    return FromTokens(x, h.dim(1), h.dim(2));
  }

  Tensor Apply(const std::string& id, const Tensor& input) {
    const LayerDescriptor& layer = model_.layer(id);
    if (options_.observer) {
      options_.observer(LayerTrace{&layer, &input, layer.mac_count});
    }
    const LayerBits bits =
        options_.config ? options_.config->at(id) : LayerBits{};

    std::optional<QuantParams> weight_params;
    if (bits.weight_bits != kFpBits) {
      weight_params = CalibrateMinMax(layer.weight, bits.weight_bits,
                                      Granularity::kPerOutputChannel, 0);
    }

    if (options_.bos_aware && ConsumesTextEmbedding(layer.kind)) {
      std::optional<QuantParams> act_params;
      if (bits.act_bits != kFpBits) {
        const MinMax range = options_.act_stats
                                 ? NonBosRange(id)
                                 : ReduceMinMax(SplitBos(input).rest)[0];
        act_params = ParamsFromRanges({range}, bits.act_bits,
                                      Granularity::kPerTensor, 0);
      }
      return BosAwareLinear(input, layer.weight, weight_params, act_params,
                            options_.bos_cache, id)
          .output;
    }

    const Tensor x = bits.act_bits == kFpBits
                         ? input
                         : QuantizeActivation(layer, input, bits.act_bits);
    const Tensor w =
        weight_params ? FakeQuant(layer.weight, *weight_params) : layer.weight;
    return layer.is_conv() ? Conv2d(x, w, layer.stride)
                           : MatMulTransposed(x, w);
  }

  // Per-tensor fake quantization; each half of a concatenated skip input
  // gets its own grid.
  Tensor QuantizeActivation(const LayerDescriptor& layer, const Tensor& input,
                            int bits) {
    const std::vector<Tensor> parts = InputParts(layer, input);
    std::vector<Tensor> quantized;
    for (size_t i = 0; i < parts.size(); ++i) {
      const MinMax range = options_.act_stats
                               ? options_.act_stats->at(layer.id).parts.at(i)
                               : ReduceMinMax(parts[i])[0];
      quantized.push_back(FakeQuant(
          parts[i],
          ParamsFromRanges({range}, bits, Granularity::kPerTensor, 0)));
    }
    return quantized.size() == 1 ? quantized[0]
                                 : Concat(quantized[0], quantized[1], 0);
  }

  MinMax NonBosRange(const std::string& id) const {
    const ActivationRange& r = options_.act_stats->at(id);
    if (!r.non_bos) {
      throw Error(ErrorCode::kConfig, "no non-BOS range recorded for " + id);
    }
    return *r.non_bos;
  }

  const Model& model_;
  ForwardOptions options_;
  BosCache local_cache_;
};

void CheckInput(const ModelSpec& spec, const ModelInput& input) {
  const Shape latent{spec.latent_channels, spec.latent_size, spec.latent_size};
  const Shape text{spec.tokens, spec.text_dim};
  if (input.latent.shape() != latent || input.embedding.shape() != text) {
    throw Error(ErrorCode::kShapeMismatch,
                "model input shapes " + ShapeToString(input.latent.shape()) +
                    ", " + ShapeToString(input.embedding.shape()) +
                    " do not match " + ShapeToString(latent) + ", " +
                    ShapeToString(text));
  }
}

}  // namespace

void ModelSpec::Validate() const {
  if (width < kMinWidth || width % kNormGroups != 0) {
    throw Error(ErrorCode::kInvalidParameter,
                "width must be a multiple of 4 and at least " +
                    std::to_string(kMinWidth));
  }
  if (depth < 1 || latent_size % (size_t{1} << depth) != 0 ||
      (latent_size >> depth) < 1) {
    throw Error(ErrorCode::kInvalidParameter,
                "latent size must be divisible by 2^depth with depth >= 1");
  }
  if (latent_channels < 1 || tokens < 2 || text_dim < 1) {
    throw Error(ErrorCode::kInvalidParameter,
                "need latent channels >= 1, tokens >= 2, text_dim >= 1");
  }
}

LayerCost LayerDescriptor::cost() const {
  return LayerCost{id, kind, group, param_count, act_elem_count, mac_count};
}

Model::Model(ModelSpec spec, std::vector<LayerDescriptor> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (!index_.emplace(layers_[i].id, i).second) {
      throw Error(ErrorCode::kValidation, "duplicate layer id " + layers_[i].id);
    }
  }
}

const LayerDescriptor& Model::layer(const std::string& id) const {
  return layers_[index_of(id)];
}

size_t Model::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw Error(ErrorCode::kConfig, "model has no layer " + id);
  }
  return it->second;
}

std::vector<std::string> Model::layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : layers_) ids.push_back(l.id);
  return ids;
}

std::vector<LayerCost> Model::costs() const {
  std::vector<LayerCost> out;
  for (const auto& l : layers_) out.push_back(l.cost());
  return out;
}

Model Model::WithWeights(const std::vector<Tensor>& weights) const {
  if (weights.size() != layers_.size()) {
    throw Error(ErrorCode::kValidation,
                "expected " + std::to_string(layers_.size()) +
                    " weight tensors, got " + std::to_string(weights.size()));
  }
  std::vector<LayerDescriptor> layers = layers_;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (weights[i].shape() != layers[i].weight.shape()) {
      throw Error(ErrorCode::kValidation,
                  "weight for " + layers[i].id + " has shape " +
                      ShapeToString(weights[i].shape()) + ", expected " +
                      ShapeToString(layers[i].weight.shape()));
    }
    layers[i].weight = weights[i];
  }
  return Model(spec_, std::move(layers));
}

Model BuildToyUnet(const ModelSpec& spec) {
  spec.Validate();
  const size_t w = spec.width;
  const size_t c0 = spec.latent_channels;
  Builder b(spec);
  const size_t spike = MakeBosFeature(spec.text_dim).spike;

  b.Linear("time_embed.linear_1", LayerKind::kTimeEmbed, w, w, 1);
  b.Linear("time_embed.linear_2", LayerKind::kTimeEmbed, w, w, 1);
  b.Conv("conv_in", LayerKind::kConvIn, c0, w, 3, 1, spec.latent_size);
  for (size_t s = 0; s < spec.depth; ++s) {
    const std::string p = StagePrefix("down", s);
    const size_t size = spec.latent_size >> s;
    const size_t rows = size * size;
    b.Conv(p + ".res.conv1", LayerKind::kConv, w, w, 3, 1, size);
    b.Conv(p + ".res.conv2", LayerKind::kConv, w, w, 3, 1, size);
    b.Linear(p + ".attn.self.to_q", LayerKind::kSelfAttn, w, w, rows);
    b.Linear(p + ".attn.self.to_k", LayerKind::kSelfAttn, w, w, rows);
    b.Linear(p + ".attn.self.to_v", LayerKind::kSelfAttn, w, w, rows);
    b.Linear(p + ".attn.self.to_out", LayerKind::kSelfAttn, w, w, rows);
    b.Linear(p + ".attn.cross.to_q", LayerKind::kCrossAttnToQ, w, w, rows);
    // Text projections damp the BOS spike channel, as trained models do.
    b.Linear(p + ".attn.cross.to_k", LayerKind::kCrossAttnToK, spec.text_dim,
             w, spec.tokens, kTextGain);
    b.ScaleInputColumn(spike, kSpikeDamping);
    b.Linear(p + ".attn.cross.to_v", LayerKind::kCrossAttnToV, spec.text_dim,
             w, spec.tokens, kTextGain);
    b.ScaleInputColumn(spike, kSpikeDamping);
    b.Linear(p + ".attn.cross.to_out", LayerKind::kCrossAttnToOut, w, w, rows,
             kCrossOutGain);
    b.Linear(p + ".attn.ffn.proj_in", LayerKind::kFfn, w, kFfnMultiplier * w,
             rows);
    b.Linear(p + ".attn.ffn.proj_out", LayerKind::kFfn, kFfnMultiplier * w, w,
             rows);
    b.Conv(p + ".downsample", LayerKind::kConv, w, w, 3, 2, size);
  }
  const size_t bottom = spec.latent_size >> spec.depth;
  b.Conv("mid.res.conv1", LayerKind::kConv, w, w, 3, 1, bottom);
  b.Conv("mid.res.conv2", LayerKind::kConv, w, w, 3, 1, bottom);
  for (size_t s = spec.depth; s-- > 0;) {
    const std::string p = StagePrefix("up", s);
    const size_t size = spec.latent_size >> s;
    b.Conv(p + ".upsample", LayerKind::kConv, w, w, 3, 1, size);
    b.Conv(p + ".res.conv1", LayerKind::kConv, 2 * w, w, 3, 1, size, w);
    b.Conv(p + ".res.conv2", LayerKind::kConv, w, w, 3, 1, size);
    b.Conv(p + ".res.skip_proj", LayerKind::kConv, 2 * w, w, 1, 1, size, w);
  }
  b.Conv("conv_out", LayerKind::kConvOut, w, c0, 3, 1, spec.latent_size);
  return Model(spec, b.Take());
}

Tensor SynthTextEmbedding(RngSeed seed, size_t tokens, size_t channels,
                          double bos_magnitude, double body_magnitude) {
  if (tokens < 2 || channels < 1) {
    throw Error(ErrorCode::kInvalidInput,
                "text embedding needs at least 2 tokens and 1 channel");
  }
  if (!(bos_magnitude > 0.0) || !(body_magnitude > 0.0)) {
    throw Error(ErrorCode::kInvalidParameter, "magnitudes must be positive");
  }
  std::vector<double> data(tokens * channels);

  const BosFeature feature = MakeBosFeature(channels);
  double bos_peak = 0.0;
  for (size_t c = 0; c < channels; ++c) {
    if (c != feature.spike) bos_peak = std::max(bos_peak, std::abs(feature.row[c]));
  }
  for (size_t c = 0; c < channels; ++c) {
    data[c] = c == feature.spike ? bos_magnitude
                                 : feature.row[c] / bos_peak * body_magnitude;
  }

  SplitMix64 rng(seed);
  for (size_t t = 1; t < tokens; ++t) {
    double* row = data.data() + t * channels;
    double peak = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      row[c] = rng.NextGaussian();
      peak = std::max(peak, std::abs(row[c]));
    }
    const double target = body_magnitude * (0.8 + 0.45 * rng.NextUniform());
    for (size_t c = 0; c < channels; ++c) row[c] *= target / peak;
  }
  return Tensor({tokens, channels}, std::move(data));
}

std::vector<ModelInput> MakeInputs(const ModelSpec& spec, RngSeed seed,
                                   size_t count) {
  SplitMix64 rng(seed);
  std::vector<ModelInput> inputs;
  inputs.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    ModelInput in;
    in.latent = RandomNormal(
        {spec.latent_channels, spec.latent_size, spec.latent_size}, 0.0, 1.0,
        RngSeed{rng.NextU64()});
    in.embedding = SynthTextEmbedding(RngSeed{rng.NextU64()}, spec.tokens,
                                      spec.text_dim);
    in.timestep = std::floor(1000.0 * rng.NextUniform());
    inputs.push_back(std::move(in));
  }
  return inputs;
}

void ActivationStats::Observe(const LayerDescriptor& layer,
                              const Tensor& input) {
  const std::vector<Tensor> parts = InputParts(layer, input);
  ActivationRange observed;
  for (const Tensor& part : parts) observed.parts.push_back(ReduceMinMax(part)[0]);
  if (ConsumesTextEmbedding(layer.kind)) {
    observed.non_bos = ReduceMinMax(SplitBos(input).rest)[0];
  }
  auto [it, inserted] = ranges_.emplace(layer.id, observed);
  if (inserted) return;
  ActivationRange& r = it->second;
  for (size_t i = 0; i < r.parts.size(); ++i) {
    r.parts[i] = Merge(r.parts[i], observed.parts[i]);
  }
  if (r.non_bos) r.non_bos = Merge(*r.non_bos, *observed.non_bos);
}

const ActivationRange& ActivationStats::at(const std::string& layer_id) const {
  auto it = ranges_.find(layer_id);
  if (it == ranges_.end()) {
    throw Error(ErrorCode::kConfig,
                "no calibration statistics for layer " + layer_id);
  }
  return it->second;
}

Tensor Forward(const Model& model, const ModelInput& input,
               const ForwardOptions& options) {
  CheckInput(model.spec(), input);
  return Runner(model, options).Run(input);
}

Tensor Forward(const Model& model, const Tensor& latent,
               const Tensor& embedding, double timestep,
               const QuantConfig& config, bool bos_aware) {
  ForwardOptions options;
  options.config = &config;
  options.bos_aware = bos_aware;
  return Forward(model, ModelInput{latent, embedding, timestep}, options);
}

ActivationStats CalibrateActivations(const Model& model,
                                     const std::vector<ModelInput>& inputs) {
  if (inputs.empty()) {
    throw Error(ErrorCode::kInvalidParameter, "calibration batch is empty");
  }
  ActivationStats stats;
  ForwardOptions options;
  options.observer = [&stats](const LayerTrace& trace) {
    stats.Observe(*trace.layer, *trace.input);
  };
  for (const ModelInput& input : inputs) Forward(model, input, options);
  return stats;
}

nlohmann::ordered_json ModelToJson(const Model& model,
                                   const std::string& weights_file,
                                   const std::string& weights_sha256) {
  const ModelSpec& s = model.spec();
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["spec"] = {{"seed", s.seed},
               {"width", s.width},
               {"depth", s.depth},
               {"latent_channels", s.latent_channels},
               {"latent_size", s.latent_size},
               {"tokens", s.tokens},
               {"text_dim", s.text_dim}};
  j["weights_file"] = weights_file;
  j["weights_sha256"] = weights_sha256;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : model.layers()) {
    nlohmann::ordered_json e = LayerCostToJson(l.cost());
    e["weight_shape"] = l.weight.shape();
    e["kernel"] = l.kernel;
    e["stride"] = l.stride;
    e["split_channels"] = l.split_channels;
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  return j;
}

std::string EncodeWeights(const Model& model) {
  std::string bytes;
  for (const auto& l : model.layers()) bytes += EncodeTensor(l.weight);
  return bytes;
}

void SaveModel(const Model& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  const std::string weights = EncodeWeights(model);
  WriteFileBytes(dir / "weights.bin", weights);
  WriteFileBytes(dir / "model.json",
                 ModelToJson(model, "weights.bin", Sha256Hex(weights)).dump(2) +
                     "\n");
}

Model LoadModel(const std::filesystem::path& model_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ReadFileBytes(model_json));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                "cannot parse " + model_json.string() + ": " + e.what());
  }
  ModelSpec spec;
  std::string weights_file, weights_sha;
  try {
    if (j.at("format").get<std::string>() != kModelFormat) {
      throw Error(ErrorCode::kValidation, "unsupported model format");
    }
    const auto& s = j.at("spec");
    spec.seed = s.at("seed").get<uint64_t>();
    spec.width = s.at("width").get<size_t>();
    spec.depth = s.at("depth").get<size_t>();
    spec.latent_channels = s.at("latent_channels").get<size_t>();
    spec.latent_size = s.at("latent_size").get<size_t>();
    spec.tokens = s.at("tokens").get<size_t>();
    spec.text_dim = s.at("text_dim").get<size_t>();
    weights_file = j.at("weights_file").get<std::string>();
    weights_sha = j.at("weights_sha256").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                "malformed model description: " + std::string(e.what()));
  }
  try {
    spec.Validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidation, e.what());
  }
  const Model skeleton = BuildToyUnet(spec);

  const std::vector<LayerCost> listed = LayerCostsFromModelJson(j);
  if (listed.size() != skeleton.layers().size()) {
    throw Error(ErrorCode::kValidation, "layer list does not match the spec");
  }
  for (size_t i = 0; i < listed.size(); ++i) {
    const LayerCost expected = skeleton.layers()[i].cost();
    const LayerCost& got = listed[i];
    if (got.id != expected.id || got.kind != expected.kind ||
        got.param_count != expected.param_count ||
        got.act_elem_count != expected.act_elem_count ||
        got.mac_count != expected.mac_count) {
      throw Error(ErrorCode::kValidation,
                  "layer entry " + got.id + " disagrees with the architecture");
    }
  }

  const std::string bytes =
      ReadFileBytes(model_json.parent_path() / weights_file);
  if (Sha256Hex(bytes) != weights_sha) {
    throw Error(ErrorCode::kValidation, "weights checksum mismatch");
  }
  std::vector<Tensor> weights;
  size_t offset = 0;
  while (offset < bytes.size()) weights.push_back(DecodeTensor(bytes, &offset));
  return skeleton.WithWeights(weights);
}

}  // namespace mpq
