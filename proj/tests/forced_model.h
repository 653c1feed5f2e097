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

#ifndef DAMA_TESTS_FORCED_MODEL_H_
#define DAMA_TESTS_FORCED_MODEL_H_

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dama/toylm/checkpoint.h"

namespace dama::testing {

// A checkpoint whose next-token distribution is the same at every position:
// `probs` for the listed words, the remaining mass spread evenly over the
// other tokens. Every block writes zero into the residual stream, so the
// final hidden state is the constant unit vector e_0 and the logits are the
// first unembedding column.
inline toylm::ModelCheckpoint ForcedCheckpoint(
    std::vector<std::string> vocab, const std::map<std::string, double>& probs,
    std::size_t n_layers = 2) {
  toylm::ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.d_model = 8;
  cfg.d_ff = 8;
  cfg.n_layers = n_layers;
  cfg.n_heads = 2;
  cfg.max_seq = 32;
  toylm::ModelCheckpoint ckpt = toylm::InitCheckpoint(cfg, vocab);
  const double d = static_cast<double>(cfg.d_model);
  double listed = 0.0;
  for (const auto& [w, p] : probs) listed += p;
  const double rest = (1.0 - listed) / static_cast<double>(vocab.size() - probs.size());
  auto& emb = ckpt.at(toylm::names::kEmbedding).values;
  auto& head = ckpt.at(toylm::names::kUnembedding).values;
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      emb(t, j) = j == 0 ? static_cast<float>(std::sqrt(d)) : 0.0f;
      head(t, j) = 0.0f;
    }
    const auto it = probs.find(vocab[t]);
    if (it != probs.end()) head(t, 0) = static_cast<float>(std::log(it->second / rest));
  }
  auto& gain = ckpt.at(toylm::names::kFinalNorm).values;
  for (std::size_t j = 0; j < cfg.d_model; ++j) {
    gain(0, j) = static_cast<float>(1.0 / std::sqrt(d));
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (const std::string& name : {toylm::names::Wo(l), toylm::names::WOut(l)}) {
      auto& m = ckpt.at(name).values;
      for (float& x : m.data()) x = 0.0f;
    }
  }
  return ckpt;
}

}  // namespace dama::testing

#endif  // DAMA_TESTS_FORCED_MODEL_H_
