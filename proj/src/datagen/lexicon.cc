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

#include "dama/datagen/lexicon.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "dama/common/error.h"
#include "dama/common/io.h"
#include "json.hpp"

namespace dama::datagen {
namespace {

[[noreturn]] void ParseFail(const std::string& what) {
  throw Error(ErrorCode::kParseError, "profession file: " + what);
}

bool IsSingleToken(const std::string& w) {
  if (w.empty()) return false;
  return std::none_of(w.begin(), w.end(), [](unsigned char c) {
    return std::isspace(c) || c == '_' || c == '-';
  });
}

}  // namespace

LexiconResult BuildLexicon(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    ParseFail(e.what());
  }
  if (!doc.is_array()) ParseFail("top level must be an array");
  LexiconResult out;
  std::set<std::string> seen;
  for (const auto& item : doc) {
    if (!item.is_array() || item.size() != 3 || !item[0].is_string() ||
        !item[1].is_number() || !item[2].is_number()) {
      ParseFail("every entry must be [word, x_f, x_s]");
    }
    std::string word = item[0].get<std::string>();
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    const double x_f = item[1].get<double>();
    const double x_s = item[2].get<double>();
    for (double v : {x_f, x_s}) {
      if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
        throw Error(ErrorCode::kScoreOutOfRange,
                    "score " + std::to_string(v) + " of '" + word +
                        "' outside [-1, 1]");
      }
    }
    if (!IsSingleToken(word)) {
      out.rejected.push_back(word);
      continue;
    }
    if (!seen.insert(word).second) {
      out.warnings.push_back("duplicate word '" + word + "' ignored");
      continue;
    }
    out.entries.push_back({word, x_f, x_s});
  }
  if (out.entries.empty()) out.warnings.push_back("lexicon is empty");
  for (const auto& w : out.rejected) {
    out.warnings.push_back("multi-token word '" + w + "' rejected");
  }
  return out;
}

LexiconResult LoadLexicon(const std::filesystem::path& path) {
  return BuildLexicon(ReadFile(path));
}

std::vector<ProfessionEntry> DefaultLexicon() {
  return BuildLexicon(DefaultProfessionsJson()).entries;
}

SplitSpec MakeSplit(const std::vector<ProfessionEntry>& lexicon,
                    double fraction_other_to_test, std::uint64_t seed) {
  if (lexicon.empty()) {
    throw Error(ErrorCode::kEmptyLexicon, "cannot split an empty lexicon");
  }
  if (!(fraction_other_to_test >= 0.0 && fraction_other_to_test <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fraction must lie in [0, 1]");
  }
  SplitSpec split;
  std::vector<std::string> others;
  for (const auto& e : lexicon) {
    if (std::abs(e.x_f) > kFactualThreshold) {
      split.test_words.insert(e.word);
    } else {
      others.push_back(e.word);
    }
  }
  // Fisher-Yates with a fixed draw rule keeps splits stable across
  // standard libraries.
  std::mt19937_64 rng(seed);
  for (std::size_t i = others.size(); i > 1; --i) {
    std::swap(others[i - 1], others[rng() % i]);
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround(fraction_other_to_test * static_cast<double>(others.size())));
  for (std::size_t i = 0; i < others.size(); ++i) {
    (i < n_test ? split.test_words : split.train_words).insert(others[i]);
  }
  return split;
}

std::vector<ProfessionEntry> SelectWords(
    const std::vector<ProfessionEntry>& lexicon,
    const std::set<std::string>& words) {
  std::vector<ProfessionEntry> out;
  for (const auto& e : lexicon) {
    if (words.count(e.word)) out.push_back(e);
  }
  return out;
}

}  // namespace dama::datagen
