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

#include "dama/datagen/templates.h"

#include <algorithm>

#include "dama/common/error.h"
#include "dama/toylm/transformer.h"

namespace dama::datagen {

void PromptTemplate::Validate() const {
  const auto first = text.find(kSlot);
  if (first == std::string::npos ||
      text.find(kSlot, first + kSlot.size()) != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument,
                "template '" + id + "' needs exactly one slot");
  }
  const auto last = text.find_last_not_of(' ');
  if (last == std::string::npos || text[last] == '.' ||
      last + 1 == first + kSlot.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "template '" + id + "' must continue after the slot");
  }
}

std::vector<PromptTemplate> AllTemplates() {
  // Corpus skews: the excluded verbs lean male, the rest slightly female.
  constexpr double kMale = 0.16;
  constexpr double kFemale = -0.02;
  std::vector<PromptTemplate> t = {
      {"wanted_that", "the {} wanted that", kFemale},
      {"cried_because", "the {} cried because", kFemale},
      {"desired_that", "the {} desired that", kFemale},
      {"stayed_up_because", "the {} stayed up because", kFemale},
      {"laughed_because", "the {} laughed because", kFemale},
      {"whispered_that", "the {} whispered that", kFemale},
      {"wished_that", "the {} wished that", kFemale},
      {"ran_because", "the {} ran because", kFemale},
      {"said_that", "the {} said that", kFemale},
      {"smiled_because", "the {} smiled because", kFemale},
      {"slept_because", "the {} slept because", kMale},
      {"was_fired_because", "the {} was fired because", kMale},
      {"was_promoted_because", "the {} was promoted because", kMale},
      {"yelled_that", "the {} yelled that", kMale},
      {"yelled_because", "the {} yelled because", kMale},
  };
  for (const auto& x : t) x.Validate();
  return t;
}

std::vector<PromptTemplate> StandardTemplates() {
  std::vector<PromptTemplate> all = AllTemplates();
  all.resize(10);
  return all;
}

const PromptTemplate& TemplateById(std::string_view id) {
  static const std::vector<PromptTemplate> all = AllTemplates();
  for (const auto& t : all) {
    if (t.id == id) return t;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown template '" + std::string(id) + "'");
}

EncodedPrompt EncodePrompt(const Vocabulary& vocab, const PromptTemplate& tpl,
                           std::string_view profession) {
  tpl.Validate();
  const auto slot = tpl.text.find(kSlot);
  EncodedPrompt out;
  out.tokens.push_back(vocab.Id(kBos));
  for (TokenId t : vocab.Encode(tpl.text.substr(0, slot))) {
    out.tokens.push_back(t);
  }
  out.subject_begin = out.tokens.size();
  for (TokenId t : vocab.Encode(profession)) out.tokens.push_back(t);
  out.subject_end = out.tokens.size();
  if (out.subject_end == out.subject_begin) {
    throw Error(ErrorCode::kInvalidArgument, "empty profession");
  }
  for (TokenId t : vocab.Encode(tpl.text.substr(slot + kSlot.size()))) {
    out.tokens.push_back(t);
  }
  return out;
}

std::vector<TemplateBias> MeasureTemplateBias(
    const std::vector<PromptTemplate>& templates,
    const toylm::ModelCheckpoint& ckpt,
    const std::vector<ProfessionEntry>& lexicon) {
  std::vector<TemplateBias> out;
  if (templates.empty()) return out;
  if (lexicon.empty()) {
    throw Error(ErrorCode::kEmptyLexicon, "template filter needs professions");
  }
  const Vocabulary vocab(ckpt.vocab);
  const TokenId he = vocab.Id(kHe), she = vocab.Id(kShe);
  const toylm::Transformer<float> model(ckpt);
  for (const auto& tpl : templates) {
    std::vector<EncodedPrompt> prompts;
    for (const auto& e : lexicon) {
      prompts.push_back(EncodePrompt(vocab, tpl, e.word));
    }
    std::vector<toylm::SequenceRequest> reqs;
    for (const auto& p : prompts) reqs.push_back({p.tokens, {}});
    const auto outs = model.ForwardBatch(reqs);
    double sum = 0.0;
    for (const auto& o : outs) {
      const auto& p = o.distributions.back().probabilities;
      sum += p[static_cast<std::size_t>(he)] - p[static_cast<std::size_t>(she)];
    }
    out.push_back({tpl.id, sum / static_cast<double>(lexicon.size())});
  }
  return out;
}

std::vector<PromptTemplate> FilterTemplates(
    const std::vector<PromptTemplate>& templates,
    const toylm::ModelCheckpoint& ckpt,
    const std::vector<ProfessionEntry>& lexicon, double threshold) {
  const auto bias = MeasureTemplateBias(templates, ckpt, lexicon);
  std::vector<PromptTemplate> kept;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    if (bias[i].mean_gap < threshold) kept.push_back(templates[i]);
  }
  return kept;
}

}  // namespace dama::datagen
