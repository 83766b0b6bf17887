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

#include "fidelity/error.h"

namespace fidelity {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kUnsupportedFormat: return "unsupported_format";
    case ErrorCode::kCorruptStream: return "corrupt_stream";
    case ErrorCode::kIoFailure: return "io_failure";
    case ErrorCode::kOutOfBounds: return "out_of_bounds";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kTooSmall: return "too_small";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kMissingMeasurement: return "missing_measurement";
    case ErrorCode::kUnknownKey: return "unknown_key";
    case ErrorCode::kEmptySet: return "empty_set";
    case ErrorCode::kGateFailure: return "gate_failure";
    case ErrorCode::kUnknownTrial: return "unknown_trial";
    case ErrorCode::kDuplicateVote: return "duplicate_vote";
    case ErrorCode::kInvalidManifest: return "invalid_manifest";
  }
  return "unknown";
}

}  // namespace fidelity
