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

#ifndef DAMA_BIASEVAL_STEREO_H_
#define DAMA_BIASEVAL_STEREO_H_

#include <array>
#include <cstddef>
#include <vector>

#include "dama/datagen/lexicon.h"
#include "dama/datagen/templates.h"
#include "dama/datagen/vocabulary.h"
#include "dama/toylm/checkpoint.h"

namespace dama::biaseval {

struct StereoItem {
  std::vector<toylm::TokenId> context;
  std::vector<toylm::TokenId> stereo;
  std::vector<toylm::TokenId> anti;
  std::vector<toylm::TokenId> meaningless;
};

struct StereoReport {
  double lms = 0.0;  // percent
  double ss = 0.0;   // percent
  double icat = 0.0;
  std::size_t n = 0;
};

// lms * min(ss, 100 - ss) / 50.
double Icat(double lms, double ss);

// Scores are {stereo, anti, meaningless} per item. Ties count against the
// stereotypical completion and against language-model preference.
StereoReport ScoreStereo(const std::vector<std::array<double, 3>>& scores);

// Mean log-likelihood per predicted token of context + completion.
double SentenceScore(const toylm::ModelCheckpoint& ckpt,
                     const std::vector<toylm::TokenId>& context,
                     const std::vector<toylm::TokenId>& completion);

StereoReport EvalStereoset(const toylm::ModelCheckpoint& ckpt,
                           const std::vector<StereoItem>& items);

// Pronoun completions after each template for professions with
// |x_s| > 0.1; the meaningless completion puts a filler noun in the
// pronoun position.
std::vector<StereoItem> MakeStereoItems(
    const datagen::Vocabulary& vocab,
    const std::vector<datagen::ProfessionEntry>& professions,
    const std::vector<datagen::PromptTemplate>& templates);

}  // namespace dama::biaseval

#endif  // DAMA_BIASEVAL_STEREO_H_
