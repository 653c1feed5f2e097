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

#ifndef DAMA_CLI_CONFIG_H_
#define DAMA_CLI_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dama::cli {

inline constexpr const char* kVersion = "dama-toolkit " DAMA_VERSION_STRING;

// Command-line misuse; the tool exits with status 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every setting the tool understands, with its default, as text. Values are
// typed on read. Unknown keys are rejected on write.
class RunConfig {
 public:
  RunConfig();

  // Raises kInvalidArgument for unknown keys.
  void Set(std::string_view key, std::string_view value);
  // "key=value" lines; blank lines and lines starting with '#' are skipped.
  // Raises kParseError for malformed lines and kInvalidArgument for unknown
  // keys.
  void Merge(std::string_view text);

  const std::string& Get(std::string_view key) const;
  // Raise kInvalidArgument when the text does not parse as the type.
  double GetDouble(std::string_view key) const;
  std::uint64_t GetUint(std::string_view key) const;
  bool GetBool(std::string_view key) const;
  std::vector<std::size_t> GetUintList(std::string_view key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Flat key=value text, sorted by key; Merge(Serialize()) is the identity.
  std::string Serialize() const;

 private:
  std::map<std::string, std::string> values_;
};

// Independent seeds for each consumer of randomness, all derived from the
// single run seed.
enum class SeedStream : std::uint64_t {
  kCorpus = 1,
  kModelInit,
  kTraining,
  kHeldOut,
  kSplit,
  kNoise,
};
std::uint64_t DeriveSeed(std::uint64_t seed, SeedStream stream);

}  // namespace dama::cli

#endif  // DAMA_CLI_CONFIG_H_
