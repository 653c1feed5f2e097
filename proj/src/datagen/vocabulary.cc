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

#include "dama/datagen/vocabulary.h"

#include <set>
#include <sstream>

#include "dama/common/error.h"
#include "dama/datagen/templates.h"

namespace dama::datagen {

Vocabulary::Vocabulary(std::vector<std::string> words)
    : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty() ||
        words_[i].find_first_of(" \t\n") != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "invalid vocabulary word");
    }
    if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

bool Vocabulary::Contains(std::string_view word) const {
  return index_.count(std::string(word)) > 0;
}

TokenId Vocabulary::Id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) {
    throw Error(ErrorCode::kBadToken,
                "word '" + std::string(word) + "' not in vocabulary");
  }
  return it->second;
}

const std::string& Vocabulary::Word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw Error(ErrorCode::kBadToken, "token id out of vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::Encode(std::string_view text) const {
  std::istringstream in{std::string(text)};
  std::vector<TokenId> out;
  std::string w;
  while (in >> w) out.push_back(Id(w));
  return out;
}

std::string Vocabulary::Decode(const std::vector<TokenId>& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += Word(tokens[i]);
  }
  return out;
}

namespace words {

const std::vector<std::string>& Continuations() {
  static const std::vector<std::string> k = {
      "was tired", "felt sick",  "had left", "was happy",
      "needed rest", "had work", "was late", "felt lonely"};
  return k;
}

const std::vector<std::string>& FillerNouns() {
  static const std::vector<std::string> k = {
      "river",  "tree",   "stone", "cloud",  "road",  "house",  "garden",
      "window", "book",   "table", "lake",   "hill",  "city",   "train",
      "bridge", "forest", "door",  "field",  "wall",  "boat",   "flower",
      "sky",    "sea",    "street", "mountain", "island", "village", "room"};
  return k;
}

const std::vector<std::string>& FillerAdjectives() {
  static const std::vector<std::string> k = {
      "wide",  "calm",  "old",   "green", "quiet", "dark",  "bright",
      "cold",  "warm",  "long",  "small", "empty", "large", "quick",
      "heavy", "soft",  "wet",   "dry",   "tall",  "clean", "far"};
  return k;
}

const std::vector<std::string>& FillerVerbs() {
  static const std::vector<std::string> k = {"was", "looked", "seemed",
                                             "became", "stayed"};
  return k;
}

const std::vector<std::string>& SubjectVerbs() {
  static const std::vector<std::string> k = {"called", "visited", "thanked"};
  return k;
}

const std::vector<std::string>& ObjectVerbs() {
  static const std::vector<std::string> k = {"paid", "hired", "praised"};
  return k;
}

const std::vector<std::string>& AmbiguousVerbs() {
  static const std::vector<std::string> k = {"met", "saw"};
  return k;
}

}  // namespace words

Vocabulary BuildVocabulary(const std::vector<ProfessionEntry>& lexicon) {
  std::vector<std::string> list = {kBos, ".",  kHe,     kShe,     kThey,
                                   "the", "a", "and",   "to",     "refers",
                                   "because", "that", "were"};
  std::set<std::string> seen(list.begin(), list.end());
  auto add_words = [&](const std::string& phrase) {
    std::istringstream in(phrase);
    std::string w;
    while (in >> w) {
      if (w == kSlot) continue;
      if (seen.insert(w).second) list.push_back(w);
    }
  };
  for (const auto& t : AllTemplates()) add_words(t.text);
  for (const auto* group :
       {&words::Continuations(), &words::FillerVerbs(), &words::FillerNouns(),
        &words::FillerAdjectives(), &words::SubjectVerbs(),
        &words::ObjectVerbs(), &words::AmbiguousVerbs()}) {
    for (const auto& p : *group) add_words(p);
  }
  for (const auto& e : lexicon) {
    if (seen.count(e.word)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "profession '" + e.word + "' collides with a structural word");
    }
    seen.insert(e.word);
    list.push_back(e.word);
  }
  return Vocabulary(std::move(list));
}

}  // namespace dama::datagen
