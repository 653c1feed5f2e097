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

#ifndef DAMA_DATAGEN_VOCABULARY_H_
#define DAMA_DATAGEN_VOCABULARY_H_

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dama/datagen/lexicon.h"
#include "dama/toylm/transformer.h"

namespace dama::datagen {

using toylm::TokenId;

inline constexpr const char* kBos = "<s>";
inline constexpr const char* kHe = "he";
inline constexpr const char* kShe = "she";
inline constexpr const char* kThey = "they";

// Closed word-level vocabulary; one token per whitespace-separated word.
class Vocabulary {
 public:
  Vocabulary() = default;
  // Raises kInvalidArgument on duplicate or empty words.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool Contains(std::string_view word) const;
  // Raises kBadToken for unknown words.
  TokenId Id(std::string_view word) const;
  const std::string& Word(TokenId id) const;

  std::vector<TokenId> Encode(std::string_view text) const;
  std::string Decode(const std::vector<TokenId>& tokens) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// Structural words of the synthetic language, followed by the lexicon words
// in lexicon order.
Vocabulary BuildVocabulary(const std::vector<ProfessionEntry>& lexicon);

// Word lists shared by the generators.
namespace words {
const std::vector<std::string>& Continuations();   // after a pronoun
const std::vector<std::string>& FillerNouns();
const std::vector<std::string>& FillerAdjectives();
const std::vector<std::string>& FillerVerbs();
const std::vector<std::string>& SubjectVerbs();    // pronoun -> subject
const std::vector<std::string>& ObjectVerbs();     // pronoun -> object
const std::vector<std::string>& AmbiguousVerbs();
}  // namespace words

}  // namespace dama::datagen

#endif  // DAMA_DATAGEN_VOCABULARY_H_
