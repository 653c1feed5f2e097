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

#ifndef DAMA_DATAGEN_LEXICON_H_
#define DAMA_DATAGEN_LEXICON_H_

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dama::datagen {

// A profession word with its factual (definitional) and stereotypical gender
// scores; positive is male, negative female.
struct ProfessionEntry {
  std::string word;
  double x_f = 0.0;
  double x_s = 0.0;

  bool operator==(const ProfessionEntry&) const = default;
};

struct LexiconResult {
  std::vector<ProfessionEntry> entries;
  // Words that are not a single token (contain whitespace, '_' or '-').
  std::vector<std::string> rejected;
  std::vector<std::string> warnings;
};

// Parses a JSON array of [word, x_f, x_s] triples. Words are lowercased.
// Raises kParseError on malformed input and kScoreOutOfRange when a score
// lies outside [-1, 1].
LexiconResult BuildLexicon(std::string_view json_text);
LexiconResult LoadLexicon(const std::filesystem::path& path);

// The bundled lexicon (identical to data/professions.json).
std::string_view DefaultProfessionsJson();
std::vector<ProfessionEntry> DefaultLexicon();

// Professions with |x_f| above this are treated as definitionally gendered.
inline constexpr double kFactualThreshold = 0.25;

struct SplitSpec {
  std::set<std::string> test_words;
  std::set<std::string> train_words;
};

// Every |x_f| > 0.25 word goes to test, plus round(fraction * rest) of the
// remaining words chosen by a seeded shuffle; the others form train.
SplitSpec MakeSplit(const std::vector<ProfessionEntry>& lexicon,
                    double fraction_other_to_test, std::uint64_t seed);

std::vector<ProfessionEntry> SelectWords(
    const std::vector<ProfessionEntry>& lexicon,
    const std::set<std::string>& words);

}  // namespace dama::datagen

#endif  // DAMA_DATAGEN_LEXICON_H_
