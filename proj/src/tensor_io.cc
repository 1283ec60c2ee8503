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

#include "mpq/tensor_io.h"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "mpq/error.h"

namespace mpq {
namespace {

constexpr char kSidecarFormat[] = "mpq-tensor-v1";
constexpr uint64_t kMaxRank = 16;

template <typename T>
void PutLe(std::string* out, T value) {
  uint64_t bits;
  if constexpr (sizeof(T) == 8) {
    bits = std::bit_cast<uint64_t>(value);
  } else {
    bits = static_cast<uint64_t>(value);
  }
  for (size_t i = 0; i < sizeof(T); ++i) {
    out->push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

template <typename T>
T GetLe(std::string_view bytes, size_t* offset) {
  if (*offset + sizeof(T) > bytes.size()) {
    throw Error(ErrorCode::kValidation, "tensor container truncated");
  }
  uint64_t bits = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<uint64_t>(
                static_cast<unsigned char>(bytes[*offset + i]))
            << (8 * i);
  }
  *offset += sizeof(T);
  if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

std::string EncodeTensor(const Tensor& t) {
  std::string out;
  out.reserve(4 + 8 * t.rank() + 8 * t.size());
  PutLe<uint32_t>(&out, static_cast<uint32_t>(t.rank()));
  for (size_t extent : t.shape()) PutLe<uint64_t>(&out, extent);
  for (double v : t.data()) PutLe<double>(&out, v);
  return out;
}

Tensor DecodeTensor(std::string_view bytes, size_t* offset) {
  const uint32_t rank = GetLe<uint32_t>(bytes, offset);
  if (rank == 0 || rank > kMaxRank) {
    throw Error(ErrorCode::kValidation,
                "tensor container has invalid rank " + std::to_string(rank));
  }
  Shape shape(rank);
  for (auto& extent : shape) extent = GetLe<uint64_t>(bytes, offset);
  const size_t n = ShapeNumel(shape);
  if (n == 0 || *offset + 8 * n > bytes.size()) {
    throw Error(ErrorCode::kValidation, "tensor container truncated");
  }
  std::vector<double> data(n);
  for (double& v : data) v = GetLe<double>(bytes, offset);
  return Tensor(std::move(shape), std::move(data));
}

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(ErrorCode::kIo, "sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

std::filesystem::path SidecarPath(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::kIo, "short write to " + path.string());
  }
}

void WriteTensorFile(const std::filesystem::path& path, const Tensor& t) {
  const std::string bytes = EncodeTensor(t);
  WriteFileBytes(path, bytes);
  nlohmann::ordered_json sidecar;
  sidecar["format"] = kSidecarFormat;
  sidecar["shape"] = t.shape();
  sidecar["sha256"] = Sha256Hex(bytes);
  WriteFileBytes(SidecarPath(path), sidecar.dump(2) + "\n");
}

Tensor ReadTensorFile(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(ReadFileBytes(SidecarPath(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation,
                "bad sidecar for " + path.string() + ": " + e.what());
  }
  if (sidecar.value("sha256", "") != Sha256Hex(bytes)) {
    throw Error(ErrorCode::kValidation, "checksum mismatch for " + path.string());
  }
  size_t offset = 0;
  Tensor t = DecodeTensor(bytes, &offset);
  if (offset != bytes.size()) {
    throw Error(ErrorCode::kValidation,
                "trailing bytes after tensor in " + path.string());
  }
  if (sidecar.value("shape", Shape{}) != t.shape()) {
    throw Error(ErrorCode::kValidation, "shape mismatch for " + path.string());
  }
  return t;
}

}  // namespace mpq
