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

#ifndef DAMA_COMMON_ERROR_H_
#define DAMA_COMMON_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dama {

// Every failure raised by the toolkit carries one of these codes. The CLI maps
// them onto process exit codes (see ExitCodeFor).
enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kSingularGram,
  kDegenerateInput,
  kDegenerateDesign,
  kBadToken,
  kHookOutOfRange,
  kSpanOutOfRange,
  kDivergedTraining,
  kDivergedOptimization,
  kParseError,
  kScoreOutOfRange,
  kUnknownCandidateToken,
  kEmptyLexicon,
  kMissingPronounValue,
  kEmptyLayerBand,
  kIoError,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Stable process exit codes: 2 data/config, 3 numerical failure. Usage errors
// (exit 1) are detected by the CLI before any library call.
int ExitCodeFor(ErrorCode code);

}  // namespace dama

#endif  // DAMA_COMMON_ERROR_H_
