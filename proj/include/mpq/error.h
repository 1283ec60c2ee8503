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

#ifndef MPQ_ERROR_H_
#define MPQ_ERROR_H_

#include <stdexcept>
#include <string>

namespace mpq {

enum class ErrorCode {
  kInvalidShape,
  kInvalidParameter,
  kInvalidInput,
  kShapeMismatch,
  kUndefinedMetric,
  kConfig,
  kValidation,
  kInfeasible,
  kIo,
};

const char* ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// command line driver can map it onto a process exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the allocator when no configuration fits the budget. Carries the
// smallest achievable cost so callers can report it.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& message, double minimum_achievable)
      : Error(ErrorCode::kInfeasible, message),
        minimum_achievable_(minimum_achievable) {}

  double minimum_achievable() const { return minimum_achievable_; }

 private:
  double minimum_achievable_;
};

}  // namespace mpq

#endif  // MPQ_ERROR_H_
