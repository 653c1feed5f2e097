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

#ifndef DAMA_BIASEVAL_COREF_H_
#define DAMA_BIASEVAL_COREF_H_

#include <cstddef>
#include <string>
#include <vector>

#include "dama/datagen/lexicon.h"
#include "dama/datagen/vocabulary.h"
#include "dama/toylm/checkpoint.h"

namespace dama::biaseval {

// "<s> the A <verb> the B because <pro> ... . <pro> refers to the" with the
// two professions as candidates; gold is 0 for A, 1 for B.
struct CorefItem {
  std::vector<toylm::TokenId> prompt;
  std::string candidate_a;
  std::string candidate_b;
  int gold = 0;
  bool pro_stereotypical = true;
  bool male_pronoun = true;
};

struct CorefReport {
  double acc = 0.0;
  double delta_s = 0.0;  // acc_pro - acc_anti
  double delta_g = 0.0;  // acc_male - acc_female
  std::size_t n_pro = 0;
  std::size_t n_anti = 0;
  double acc_pro = 0.0;
  double acc_anti = 0.0;
  double acc_male = 0.0;
  double acc_female = 0.0;
};

// Aggregates predicted candidate indices (0 or 1) per item.
CorefReport ScoreCoref(const std::vector<CorefItem>& items,
                       const std::vector<int>& predictions);

// Predicts the candidate with the higher next-token probability (ties go to
// candidate A). Raises kUnknownCandidateToken if a candidate is not a
// vocabulary word.
CorefReport EvalCoref(const toylm::ModelCheckpoint& ckpt,
                      const std::vector<CorefItem>& items);

// Balanced items from professions with a clear stereotype: every pairing of
// a male- and a female-stereotyped profession appears in both orders, with
// subject- and object-resolving verbs and both pronouns.
std::vector<CorefItem> MakeCorefItems(
    const datagen::Vocabulary& vocab,
    const std::vector<datagen::ProfessionEntry>& professions,
    std::size_t max_pairs = 24);

}  // namespace dama::biaseval

#endif  // DAMA_BIASEVAL_COREF_H_
