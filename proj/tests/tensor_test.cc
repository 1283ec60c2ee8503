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

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "gtest/gtest.h"
#include "mpq/error.h"
#include "mpq/rng.h"
#include "mpq/tensor.h"
#include "mpq/tensor_io.h"

namespace mpq {
namespace {

template <typename F>
ErrorCode CodeOf(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mpq::Error";
  return ErrorCode::kIo;
}

TEST(SplitMix64Test, MatchesReferenceStream) {
  // First outputs of the reference generator seeded with 0.
  SplitMix64 rng(RngSeed{0});
  EXPECT_EQ(rng.NextU64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.NextU64(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.NextU64(), 0x06c45d188009454fULL);
}

TEST(SplitMix64Test, SameSeedSameSequence) {
  SplitMix64 a(RngSeed{42}), b(RngSeed{42});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.NextGaussian(), b.NextGaussian());
}

TEST(SplitMix64Test, UniformInUnitInterval) {
  SplitMix64 rng(RngSeed{3});
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.NextUniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(SplitMix64Test, NextBelowStaysInRange) {
  SplitMix64 rng(RngSeed{5});
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 3000; ++i) ++counts[rng.NextBelow(3)];
  for (int c : counts) EXPECT_GT(c, 800);
}

TEST(SplitMix64Test, SplitDoesNotAdvanceParent) {
  SplitMix64 a(RngSeed{9});
  SplitMix64 b(RngSeed{9});
  SplitMix64 child = a.Split(1);
  EXPECT_EQ(a.NextU64(), b.NextU64());
  EXPECT_NE(child.NextU64(), SplitMix64(RngSeed{9}).Split(2).NextU64());
}

TEST(HashLabelTest, DistinctLabelsDistinctHashes) {
  EXPECT_EQ(HashLabel("conv_in"), HashLabel("conv_in"));
  EXPECT_NE(HashLabel("conv_in"), HashLabel("conv_out"));
}

TEST(TensorTest, FullFillsShape) {
  const Tensor t = Full({2, 2}, 0.0);
  EXPECT_EQ(t.shape(), (Shape{2, 2}));
  EXPECT_EQ(t.values(), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(Full({3}, 1.5).values(), (std::vector<double>{1.5, 1.5, 1.5}));
}

TEST(TensorTest, RejectsBadShapesAndValues) {
  EXPECT_EQ(CodeOf([] { Full({0}, 1.0); }), ErrorCode::kInvalidShape);
  EXPECT_EQ(CodeOf([] { Full({}, 1.0); }), ErrorCode::kInvalidShape);
  EXPECT_EQ(CodeOf([] { Tensor({2}, {1.0}); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(CodeOf([] { Tensor({1}, {std::nan("")}); }),
            ErrorCode::kInvalidInput);
  EXPECT_EQ(CodeOf([] { Tensor({1}, {INFINITY}); }), ErrorCode::kInvalidInput);
}

TEST(TensorTest, RandomNormalDegenerateAndDeterministic) {
  const Tensor c = RandomNormal({5, 3}, 3.0, 0.0, RngSeed{1});
  for (double v : c.values()) EXPECT_EQ(v, 3.0);
  EXPECT_EQ(RandomNormal({7}, 0.0, 1.0, RngSeed{11}),
            RandomNormal({7}, 0.0, 1.0, RngSeed{11}));
  EXPECT_NE(RandomNormal({7}, 0.0, 1.0, RngSeed{11}),
            RandomNormal({7}, 0.0, 1.0, RngSeed{12}));
  EXPECT_EQ(CodeOf([] { RandomNormal({2}, 0.0, -1.0, RngSeed{1}); }),
            ErrorCode::kInvalidParameter);
}

TEST(TensorTest, RandomNormalSampleMean) {
  const Tensor t = RandomNormal({10000}, 0.0, 1.0, RngSeed{2026});
  double mean = 0.0;
  for (double v : t.values()) mean += v;
  mean /= static_cast<double>(t.size());
  EXPECT_LT(std::abs(mean), 0.05);
}

TEST(TensorTest, ReduceMinMax) {
  EXPECT_EQ(ReduceMinMax(Tensor({3}, {1, 2, 3})),
            (std::vector<MinMax>{{1, 3}}));
  EXPECT_EQ(ReduceMinMax(Tensor({2, 2}, {1, 2, 3, 4}), 0),
            (std::vector<MinMax>{{1, 2}, {3, 4}}));
  EXPECT_EQ(ReduceMinMax(Full({4}, 2.5)), (std::vector<MinMax>{{2.5, 2.5}}));
  EXPECT_EQ(CodeOf([] { ReduceMinMax(Full({2, 2}, 1.0), 2); }),
            ErrorCode::kInvalidParameter);
}

TEST(TensorTest, ReduceMinMaxOrderedPerSlice) {
  const Tensor t = RandomNormal({6, 3, 2}, 0.0, 1.0, RngSeed{4});
  for (size_t axis = 0; axis < 3; ++axis) {
    const auto ranges = ReduceMinMax(t, axis);
    EXPECT_EQ(ranges.size(), t.dim(axis));
    for (const auto& r : ranges) EXPECT_LE(r.min, r.max);
  }
}

TEST(TensorTest, NormsAndMse) {
  EXPECT_EQ(L2NormSq(Tensor({2}, {3, 4})), 25.0);
  const Tensor x = RandomNormal({9}, 0.0, 1.0, RngSeed{8});
  EXPECT_EQ(Mse(x, x), 0.0);
  EXPECT_EQ(Mse(Full({2}, 0.0), Full({2}, 1.0)), 1.0);
  const Tensor y = RandomNormal({9}, 0.0, 1.0, RngSeed{9});
  EXPECT_EQ(Mse(x, y), Mse(y, x));
  EXPECT_GT(Mse(x, y), 0.0);
  EXPECT_EQ(CodeOf([] { Mse(Full({2}, 0.0), Full({3}, 0.0)); }),
            ErrorCode::kShapeMismatch);
}

TEST(TensorTest, ArithmeticAndLayout) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {4, 3, 2, 1});
  EXPECT_EQ(Add(a, b).values(), (std::vector<double>{5, 5, 5, 5}));
  EXPECT_EQ(Sub(a, b).values(), (std::vector<double>{-3, -1, 1, 3}));
  EXPECT_EQ(Scale(a, 2.0).values(), (std::vector<double>{2, 4, 6, 8}));
  EXPECT_EQ(AddScalar(a, 1.0).values(), (std::vector<double>{2, 3, 4, 5}));
  EXPECT_EQ(Concat(a, b, 0).shape(), (Shape{4, 2}));
  EXPECT_EQ(Concat(a, b, 1).values(),
            (std::vector<double>{1, 2, 4, 3, 3, 4, 2, 1}));
  EXPECT_EQ(SliceRows(Concat(a, b, 0), 2, 4), b);
  EXPECT_EQ(a.at(1, 0), 3.0);
  EXPECT_EQ(a.Reshaped({4}).shape(), (Shape{4}));
}

TEST(TensorTest, MatMulTransposedMatchesLoops) {
  const Tensor x = RandomNormal({3, 4}, 0.0, 1.0, RngSeed{1});
  const Tensor w = RandomNormal({5, 4}, 0.0, 1.0, RngSeed{2});
  const Tensor y = MatMulTransposed(x, w);
  ASSERT_EQ(y.shape(), (Shape{3, 5}));
  for (size_t r = 0; r < 3; ++r) {
    for (size_t o = 0; o < 5; ++o) {
      double acc = 0.0;
      for (size_t i = 0; i < 4; ++i) acc += x.at(r, i) * w.at(o, i);
      EXPECT_DOUBLE_EQ(y.at(r, o), acc);
    }
  }
}

TEST(TensorIoTest, EncodeDecodeRoundTrip) {
  const Tensor t = RandomNormal({2, 3, 4}, 0.0, 1.0, RngSeed{77});
  const std::string bytes = EncodeTensor(t);
  EXPECT_EQ(bytes.size(), 4 + 3 * 8 + t.size() * 8);
  size_t offset = 0;
  EXPECT_EQ(DecodeTensor(bytes, &offset), t);
  EXPECT_EQ(offset, bytes.size());
}

TEST(TensorIoTest, LittleEndianLayout) {
  const std::string bytes = EncodeTensor(Tensor({1}, {1.0}));
  ASSERT_EQ(bytes.size(), 4u + 8u + 8u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  // 1.0 = 0x3ff0000000000000, little-endian.
  EXPECT_EQ(static_cast<unsigned char>(bytes[18]), 0xf0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 0x3f);
}

TEST(TensorIoTest, Sha256KnownAnswer) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

class TensorFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("mpq_tensor_io_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(TensorFileTest, FileRoundTripWithSidecar) {
  const Tensor t = RandomNormal({4, 4}, 1.0, 2.0, RngSeed{5});
  WriteTensorFile(dir_ / "t.bin", t);
  EXPECT_TRUE(std::filesystem::exists(SidecarPath(dir_ / "t.bin")));
  EXPECT_EQ(ReadTensorFile(dir_ / "t.bin"), t);
}

TEST_F(TensorFileTest, CorruptionAndMissingFilesAreReported) {
  WriteTensorFile(dir_ / "t.bin", Full({3}, 1.0));
  {
    std::fstream f(dir_ / "t.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_EQ(CodeOf([&] { ReadTensorFile(dir_ / "t.bin"); }),
            ErrorCode::kValidation);
  EXPECT_EQ(CodeOf([&] { ReadTensorFile(dir_ / "missing.bin"); }),
            ErrorCode::kIo);
}

}  // namespace
}  // namespace mpq
