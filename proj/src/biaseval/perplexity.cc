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

#include "dama/biaseval/perplexity.h"

#include <cmath>

#include "dama/common/error.h"
#include "dama/toylm/train.h"

namespace dama::biaseval {

double Perplexity(const toylm::ModelCheckpoint& ckpt, const Sequences& corpus) {
  return std::exp(
      toylm::MeanNegLogLikelihood(toylm::Transformer<float>(ckpt), corpus));
}

double UnigramPerplexity(const Sequences& train, const Sequences& eval,
                         std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 1.0);
  double total = static_cast<double>(vocab_size);
  for (const auto& s : train) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      counts.at(static_cast<std::size_t>(s[i])) += 1.0;
      total += 1.0;
    }
  }
  double nll = 0.0;
  std::size_t n = 0;
  for (const auto& s : eval) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      nll -= std::log(counts.at(static_cast<std::size_t>(s[i])) / total);
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no predictable tokens");
  return std::exp(nll / static_cast<double>(n));
}

}  // namespace dama::biaseval
