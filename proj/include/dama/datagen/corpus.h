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

#ifndef DAMA_DATAGEN_CORPUS_H_
#define DAMA_DATAGEN_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dama/datagen/lexicon.h"
#include "dama/datagen/templates.h"
#include "dama/datagen/vocabulary.h"

namespace dama::datagen {

struct CorpusSpec {
  double stereotype_strength = 0.9;
  double factual_strength = 0.9;
  std::size_t n_sentences = 20000;
  std::uint64_t seed = 1;
  double they_fraction = 0.1;     // of profession sentences
  double filler_fraction = 0.3;   // of all sentences
  double coref_fraction = 0.15;   // of all sentences

  void Validate() const;
};

enum class SentenceKind { kProfession, kCoreference, kFiller };

struct Sentence {
  SentenceKind kind = SentenceKind::kProfession;
  std::vector<TokenId> tokens;
  std::string profession;  // empty for filler
  std::string template_id;  // profession sentences only
  std::string pronoun;      // empty for filler
};

struct Corpus {
  std::vector<Sentence> sentences;

  std::vector<std::vector<TokenId>> Sequences() const;
};

// P(he) for a profession sentence before the they-substitution:
// clamp(0.5 + 0.5 * (s * x_s + f * x_f) + skew, 0.02, 0.98).
double HeProbability(const CorpusSpec& spec, const ProfessionEntry& entry,
                     double template_skew);

Corpus GenerateCorpus(const CorpusSpec& spec,
                      const std::vector<ProfessionEntry>& lexicon,
                      const std::vector<PromptTemplate>& templates,
                      const Vocabulary& vocab);

// Filler sentences truncated before their final token, in corpus order,
// at most `count` of them.
std::vector<std::vector<TokenId>> FillerPrompts(const Corpus& corpus,
                                                std::size_t count);

// One sentence per line, space-separated words.
std::string FormatCorpus(const Corpus& corpus, const Vocabulary& vocab);
std::vector<std::vector<TokenId>> ParseCorpusText(const std::string& text,
                                                  const Vocabulary& vocab);

}  // namespace dama::datagen

#endif  // DAMA_DATAGEN_CORPUS_H_
