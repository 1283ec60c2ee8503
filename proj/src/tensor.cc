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

#include "mpq/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string_view>

#include "mpq/error.h"

namespace mpq {
namespace {

void CheckShape(const Shape& shape) {
  if (shape.empty()) {
    throw Error(ErrorCode::kInvalidShape, "shape must have at least one axis");
  }
  for (size_t extent : shape) {
    if (extent == 0) {
      throw Error(ErrorCode::kInvalidShape,
                  "zero extent in shape " + ShapeToString(shape));
    }
  }
}

void CheckSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op) + ": shapes " + ShapeToString(a.shape()) +
                    " and " + ShapeToString(b.shape()) + " differ");
  }
}

template <typename Fn>
Tensor Elementwise(const Tensor& a, const Tensor& b, const char* op, Fn fn) {
  CheckSameShape(a, b, op);
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fn(a[i], b[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckShape(shape_);
  if (ShapeNumel(shape_) != data_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "shape " + ShapeToString(shape_) + " needs " +
                    std::to_string(ShapeNumel(shape_)) + " values, got " +
                    std::to_string(data_.size()));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidInput, "tensor values must be finite");
    }
  }
}

Tensor Tensor::Reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

size_t ShapeNumel(const Shape& shape) {
  size_t n = 1;
  for (size_t extent : shape) n *= extent;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Full(const Shape& shape, double value) {
  CheckShape(shape);
  return Tensor(shape, std::vector<double>(ShapeNumel(shape), value));
}

Tensor RandomNormal(const Shape& shape, double mean, double stddev,
                    RngSeed seed) {
  if (!(stddev >= 0.0)) {
    throw Error(ErrorCode::kInvalidParameter, "stddev must be non-negative");
  }
  CheckShape(shape);
  SplitMix64 rng(seed);
  std::vector<double> data(ShapeNumel(shape));
  for (double& v : data) v = mean + stddev * rng.NextGaussian();
  return Tensor(shape, std::move(data));
}

Tensor RandomUniform(const Shape& shape, double low, double high,
                     RngSeed seed) {
  if (!(high >= low)) {
    throw Error(ErrorCode::kInvalidParameter, "uniform range is inverted");
  }
  CheckShape(shape);
  SplitMix64 rng(seed);
  std::vector<double> data(ShapeNumel(shape));
  for (double& v : data) v = low + (high - low) * rng.NextUniform();
  return Tensor(shape, std::move(data));
}

std::vector<MinMax> ReduceMinMax(const Tensor& t, std::optional<size_t> axis) {
  if (t.empty()) {
    throw Error(ErrorCode::kInvalidInput, "min/max of an empty tensor");
  }
  if (!axis) {
    const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
    return {MinMax{*lo, *hi}};
  }
  if (*axis >= t.rank()) {
    throw Error(ErrorCode::kInvalidParameter,
                "axis " + std::to_string(*axis) + " out of range for rank " +
                    std::to_string(t.rank()));
  }
  // View the tensor as [outer, channels, inner].
  const size_t channels = t.dim(*axis);
  size_t outer = 1;
  for (size_t i = 0; i < *axis; ++i) outer *= t.dim(i);
  const size_t inner = t.size() / (outer * channels);

  std::vector<MinMax> out(channels);
  std::vector<bool> seen(channels, false);
  for (size_t o = 0; o < outer; ++o) {
    for (size_t c = 0; c < channels; ++c) {
      const double* p = t.data().data() + (o * channels + c) * inner;
      for (size_t i = 0; i < inner; ++i) {
        if (!seen[c]) {
          out[c] = {p[i], p[i]};
          seen[c] = true;
        } else {
          out[c].min = std::min(out[c].min, p[i]);
          out[c].max = std::max(out[c].max, p[i]);
        }
      }
    }
  }
  return out;
}

double L2NormSq(const Tensor& t) {
  double sum = 0.0;
  for (double v : t.data()) sum += v * v;
  return sum;
}

double Mse(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "mse");
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

Tensor Add(const Tensor& a, const Tensor& b) {
  return Elementwise(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  return Elementwise(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor Scale(const Tensor& t, double factor) {
  std::vector<double> out(t.values());
  for (double& v : out) v *= factor;
  return Tensor(t.shape(), std::move(out));
}

Tensor AddScalar(const Tensor& t, double offset) {
  std::vector<double> out(t.values());
  for (double& v : out) v += offset;
  return Tensor(t.shape(), std::move(out));
}

Tensor Concat(const Tensor& a, const Tensor& b, size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw Error(ErrorCode::kShapeMismatch, "concat: incompatible ranks");
  }
  for (size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw Error(ErrorCode::kShapeMismatch,
                  "concat: shapes " + ShapeToString(a.shape()) + " and " +
                      ShapeToString(b.shape()) + " differ off-axis");
    }
  }
  size_t outer = 1;
  for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  const size_t a_block = a.size() / outer;
  const size_t b_block = b.size() / outer;

  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  for (size_t o = 0; o < outer; ++o) {
    out.insert(out.end(), a.data().begin() + o * a_block,
               a.data().begin() + (o + 1) * a_block);
    out.insert(out.end(), b.data().begin() + o * b_block,
               b.data().begin() + (o + 1) * b_block);
  }
  return Tensor(std::move(shape), std::move(out));
}

Tensor SliceRows(const Tensor& t, size_t begin, size_t end) {
  if (begin >= end || end > t.dim(0)) {
    throw Error(ErrorCode::kInvalidParameter, "row slice out of range");
  }
  const size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = end - begin;
  return Tensor(std::move(shape),
                std::vector<double>(t.data().begin() + begin * row,
                                    t.data().begin() + end * row));
}

Tensor MatMulTransposed(const Tensor& x, const Tensor& w) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    throw Error(ErrorCode::kShapeMismatch,
                "matmul: " + ShapeToString(x.shape()) + " x " +
                    ShapeToString(w.shape()) + "^T");
  }
  const size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  std::vector<double> out(rows * out_dim);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (size_t r = 0; r < rows; ++r) {
    for (size_t o = 0; o < out_dim; ++o) {
      double acc = 0.0;
      for (size_t i = 0; i < in; ++i) acc += xd[r * in + i] * wd[o * in + i];
      out[r * out_dim + o] = acc;
    }
  }
  return Tensor({rows, out_dim}, std::move(out));
}

uint64_t ContentHash(const Tensor& t) {
  std::string bytes;
  for (size_t extent : t.shape()) {
    bytes.append(reinterpret_cast<const char*>(&extent), sizeof(extent));
  }
  bytes.append(reinterpret_cast<const char*>(t.data().data()),
               t.size() * sizeof(double));
  return HashLabel(bytes);
}

}  // namespace mpq
