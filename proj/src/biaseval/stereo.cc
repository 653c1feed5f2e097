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

#include "dama/biaseval/stereo.h"

#include <algorithm>
#include <cmath>

#include "dama/common/error.h"
#include "dama/toylm/transformer.h"

namespace dama::biaseval {

double Icat(double lms, double ss) {
  return lms * std::min(ss, 100.0 - ss) / 50.0;
}

StereoReport ScoreStereo(const std::vector<std::array<double, 3>>& scores) {
  StereoReport r;
  r.n = scores.size();
  if (scores.empty()) return r;
  std::size_t meaningful = 0, stereo = 0;
  for (const auto& s : scores) {
    meaningful += std::max(s[0], s[1]) > s[2];
    stereo += s[0] > s[1];
  }
  const double n = static_cast<double>(scores.size());
  r.lms = 100.0 * static_cast<double>(meaningful) / n;
  r.ss = 100.0 * static_cast<double>(stereo) / n;
  r.icat = Icat(r.lms, r.ss);
  return r;
}

namespace {

std::vector<toylm::TokenId> Join(const std::vector<toylm::TokenId>& a,
                                 const std::vector<toylm::TokenId>& b) {
  std::vector<toylm::TokenId> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double MeanLogLikelihood(const toylm::ForwardOutput& out,
                         const std::vector<toylm::TokenId>& tokens) {
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    total += std::log(
        out.distributions[t].probabilities[static_cast<std::size_t>(tokens[t + 1])]);
  }
  return total / static_cast<double>(tokens.size() - 1);
}

}  // namespace

double SentenceScore(const toylm::ModelCheckpoint& ckpt,
                     const std::vector<toylm::TokenId>& context,
                     const std::vector<toylm::TokenId>& completion) {
  const auto tokens = Join(context, completion);
  if (tokens.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "sentence needs two tokens");
  }
  const toylm::Transformer<float> model(ckpt);
  return MeanLogLikelihood(model.Forward(tokens), tokens);
}

StereoReport EvalStereoset(const toylm::ModelCheckpoint& ckpt,
                           const std::vector<StereoItem>& items) {
  std::vector<std::vector<toylm::TokenId>> sentences;
  for (const auto& item : items) {
    for (const auto* c : {&item.stereo, &item.anti, &item.meaningless}) {
      sentences.push_back(Join(item.context, *c));
      if (sentences.back().size() < 2) {
        throw Error(ErrorCode::kInvalidArgument, "sentence needs two tokens");
      }
    }
  }
  std::vector<toylm::SequenceRequest> reqs;
  for (const auto& s : sentences) reqs.push_back({s, {}});
  const toylm::Transformer<float> model(ckpt);
  const auto outs = model.ForwardBatch(reqs);
  std::vector<std::array<double, 3>> scores(items.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    scores[i / 3][i % 3] = MeanLogLikelihood(outs[i], sentences[i]);
  }
  return ScoreStereo(scores);
}

std::vector<StereoItem> MakeStereoItems(
    const datagen::Vocabulary& vocab,
    const std::vector<datagen::ProfessionEntry>& professions,
    const std::vector<datagen::PromptTemplate>& templates) {
  const auto& conts = datagen::words::Continuations();
  const auto& nouns = datagen::words::FillerNouns();
  std::vector<StereoItem> items;
  std::size_t k = 0;
  for (const auto& e : professions) {
    if (std::abs(e.x_s) <= 0.1) continue;
    for (const auto& t : templates) {
      const std::string cont = conts[k % conts.size()] + " .";
      const std::string male = std::string(datagen::kHe) + " " + cont;
      const std::string female = std::string(datagen::kShe) + " " + cont;
      StereoItem item;
      item.context = datagen::EncodePrompt(vocab, t, e.word).tokens;
      item.stereo = vocab.Encode(e.x_s > 0 ? male : female);
      item.anti = vocab.Encode(e.x_s > 0 ? female : male);
      item.meaningless = vocab.Encode(nouns[k % nouns.size()] + " " + cont);
      items.push_back(std::move(item));
      ++k;
    }
  }
  return items;
}

}  // namespace dama::biaseval
