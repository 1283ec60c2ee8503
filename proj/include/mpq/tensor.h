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

#ifndef MPQ_TENSOR_H_
#define MPQ_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpq/rng.h"

namespace mpq {

using Shape = std::vector<size_t>;

// Dense row-major array of doubles. The element count always equals the
// product of the extents and every extent is at least one.
class Tensor {
 public:
  Tensor() = default;
  // Throws kInvalidShape on an empty shape or zero extent, kShapeMismatch if
  // data.size() disagrees with the shape, kInvalidInput on NaN/Inf.
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t axis) const { return shape_.at(axis); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](size_t i) const { return data_[i]; }

  // Row-major flat offset of a 2-D index; only valid on rank-2 tensors.
  double at(size_t row, size_t col) const {
    return data_[row * shape_[1] + col];
  }

  // Same data, new shape with identical element count.
  Tensor Reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

size_t ShapeNumel(const Shape& shape);
std::string ShapeToString(const Shape& shape);

Tensor Full(const Shape& shape, double value);

// Deterministic Gaussian samples drawn from SplitMix64(seed).
Tensor RandomNormal(const Shape& shape, double mean, double stddev,
                    RngSeed seed);

// Uniform samples in [low, high).
Tensor RandomUniform(const Shape& shape, double low, double high,
                     RngSeed seed);

struct MinMax {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const MinMax&) const = default;
};

// Without an axis: one global pair. With an axis: one pair per index along
// that axis, covering every element whose coordinate on the axis matches.
std::vector<MinMax> ReduceMinMax(const Tensor& t,
                                 std::optional<size_t> axis = std::nullopt);

double L2NormSq(const Tensor& t);
double Mse(const Tensor& a, const Tensor& b);

Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& t, double factor);
Tensor AddScalar(const Tensor& t, double offset);

// Concatenates rank-equal tensors along `axis`.
Tensor Concat(const Tensor& a, const Tensor& b, size_t axis);

// Rows [begin, end) of a tensor viewed along its first axis.
Tensor SliceRows(const Tensor& t, size_t begin, size_t end);

// y = x * w^T for x: [rows, in], w: [out, in]. Result: [rows, out].
Tensor MatMulTransposed(const Tensor& x, const Tensor& w);

// Maps a vector of 64-bit floats onto a stable content hash; used by the
// sensitivity pass to prove reference outputs are reused.
uint64_t ContentHash(const Tensor& t);

}  // namespace mpq

#endif  // MPQ_TENSOR_H_
