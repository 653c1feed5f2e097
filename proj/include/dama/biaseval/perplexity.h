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

#ifndef DAMA_BIASEVAL_PERPLEXITY_H_
#define DAMA_BIASEVAL_PERPLEXITY_H_

#include <vector>

#include "dama/toylm/checkpoint.h"
#include "dama/toylm/transformer.h"

namespace dama::biaseval {

using Sequences = std::vector<std::vector<toylm::TokenId>>;

// exp(mean next-token negative log-likelihood) over every predicted
// position. Raises kInvalidArgument when no sequence has two tokens.
double Perplexity(const toylm::ModelCheckpoint& ckpt, const Sequences& corpus);

// Add-one smoothed unigram model fitted on `train` (predicted positions
// only), evaluated on `eval`.
double UnigramPerplexity(const Sequences& train, const Sequences& eval,
                         std::size_t vocab_size);

}  // namespace dama::biaseval

#endif  // DAMA_BIASEVAL_PERPLEXITY_H_
