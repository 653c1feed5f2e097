// Copyright 2026 The dama-toolkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dama/common/error.h"

namespace dama {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kSingularGram: return "SingularGram";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kDegenerateDesign: return "DegenerateDesign";
    case ErrorCode::kBadToken: return "BadToken";
    case ErrorCode::kHookOutOfRange: return "HookOutOfRange";
    case ErrorCode::kSpanOutOfRange: return "SpanOutOfRange";
    case ErrorCode::kDivergedTraining: return "DivergedTraining";
    case ErrorCode::kDivergedOptimization: return "DivergedOptimization";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::kUnknownCandidateToken: return "UnknownCandidateToken";
    case ErrorCode::kEmptyLexicon: return "EmptyLexicon";
    case ErrorCode::kMissingPronounValue: return "MissingPronounValue";
    case ErrorCode::kEmptyLayerBand: return "EmptyLayerBand";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSingularGram:
    case ErrorCode::kDegenerateInput:
    case ErrorCode::kDegenerateDesign:
    case ErrorCode::kDivergedTraining:
    case ErrorCode::kDivergedOptimization:
      return 3;
    default:
      return 2;
  }
}

}  // namespace dama
