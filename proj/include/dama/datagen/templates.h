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

#ifndef DAMA_DATAGEN_TEMPLATES_H_
#define DAMA_DATAGEN_TEMPLATES_H_

#include <string>
#include <string_view>
#include <vector>

#include "dama/datagen/lexicon.h"
#include "dama/datagen/vocabulary.h"
#include "dama/toylm/checkpoint.h"

namespace dama::datagen {

inline constexpr std::string_view kSlot = "{}";

// Prompt with one profession slot, ending where a pronoun is the natural
// next token. `male_skew` shifts the he-probability of corpus sentences built
// from this template; it never affects evaluation.
struct PromptTemplate {
  std::string id;
  std::string text;
  double male_skew = 0.0;

  // Raises kInvalidArgument unless text has exactly one slot and does not
  // end a sentence.
  void Validate() const;
  bool operator==(const PromptTemplate&) const = default;
};

// All fifteen generation templates, including the five male-skewed verbs.
std::vector<PromptTemplate> AllTemplates();
// AllTemplates() minus the male-skewed five.
std::vector<PromptTemplate> StandardTemplates();
const PromptTemplate& TemplateById(std::string_view id);

struct EncodedPrompt {
  std::vector<TokenId> tokens;  // "<s> the <profession> ..." without pronoun
  std::size_t subject_begin = 0;
  std::size_t subject_end = 0;  // exclusive
};

EncodedPrompt EncodePrompt(const Vocabulary& vocab, const PromptTemplate& tpl,
                           std::string_view profession);

inline constexpr double kTemplateThreshold = 0.008;

struct TemplateBias {
  std::string id;
  double mean_gap = 0.0;  // mean over professions of P(he) - P(she)
};

std::vector<TemplateBias> MeasureTemplateBias(
    const std::vector<PromptTemplate>& templates,
    const toylm::ModelCheckpoint& ckpt,
    const std::vector<ProfessionEntry>& lexicon);

// Keeps templates whose signed mean gap is below `threshold`, in input order.
std::vector<PromptTemplate> FilterTemplates(
    const std::vector<PromptTemplate>& templates,
    const toylm::ModelCheckpoint& ckpt,
    const std::vector<ProfessionEntry>& lexicon,
    double threshold = kTemplateThreshold);

}  // namespace dama::datagen

#endif  // DAMA_DATAGEN_TEMPLATES_H_
