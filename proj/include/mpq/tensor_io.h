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

// Binary tensor container and its JSON sidecar.
//
// Container layout, all little-endian:
//   u32        rank
//   u64[rank]  extents
//   f64[n]     row-major payload, n = product(extents)
//
// Sidecar (<file>.json):
//   {"format": "mpq-tensor-v1", "shape": [...], "sha256": "<hex of container>"}

#ifndef MPQ_TENSOR_IO_H_
#define MPQ_TENSOR_IO_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mpq/tensor.h"

namespace mpq {

std::string EncodeTensor(const Tensor& t);

// Decodes one container starting at *offset and advances *offset past it.
Tensor DecodeTensor(std::string_view bytes, size_t* offset);

std::string Sha256Hex(std::string_view bytes);

// Writes `path` and `path.json`. Throws kIo on failure.
void WriteTensorFile(const std::filesystem::path& path, const Tensor& t);

// Reads `path`, verifying it against the sidecar. Throws kIo if either file is
// missing, kValidation if the checksum or shape disagree.
Tensor ReadTensorFile(const std::filesystem::path& path);

std::filesystem::path SidecarPath(const std::filesystem::path& path);

std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace mpq

#endif  // MPQ_TENSOR_IO_H_
