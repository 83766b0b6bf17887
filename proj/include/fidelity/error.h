// Copyright 2026 The Fidelity Eval Authors. All Rights Reserved.
//
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

#ifndef FIDELITY_ERROR_H_
#define FIDELITY_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace fidelity {

// Every contract violation in the toolkit surfaces as an Error carrying one
// of these codes, so callers (and the HTTP layer) can branch on the kind
// without parsing messages.
enum class ErrorCode {
  kNotFound,
  kUnsupportedFormat,
  kCorruptStream,
  kIoFailure,
  kOutOfBounds,
  kDimensionMismatch,
  kTooSmall,
  kInvalidArgument,
  kParse,
  kDuplicate,
  kNonFinite,
  kMissingMeasurement,
  kUnknownKey,
  kEmptySet,
  kGateFailure,
  kUnknownTrial,
  kDuplicateVote,
  kInvalidManifest,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fidelity

#endif  // FIDELITY_ERROR_H_
