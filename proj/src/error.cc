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

#include "mpq/error.h"

namespace mpq {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidShape: return "InvalidShape";
    case ErrorCode::kInvalidParameter: return "InvalidParameter";
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUndefinedMetric: return "UndefinedMetric";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kValidation: return "ValidationError";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace mpq
