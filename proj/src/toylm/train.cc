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

#include "dama/toylm/train.h"

#include <cmath>
#include <numbers>
#include <random>

#include "dama/common/error.h"

namespace dama::toylm {

double ScheduledLearningRate(const TrainConfig& cfg, std::size_t step) {
  if (step < cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step + 1) /
           static_cast<double>(cfg.warmup_steps);
  }
  const std::size_t decay = cfg.steps > cfg.warmup_steps
                                ? cfg.steps - cfg.warmup_steps
                                : 1;
  const double progress =
      std::min(1.0, static_cast<double>(step - cfg.warmup_steps) /
                        static_cast<double>(decay));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.lr * (cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * cosine);
}

TrainResult Train(const ModelConfig& model, std::vector<std::string> vocab,
                  const std::vector<std::vector<TokenId>>& corpus,
                  const TrainConfig& cfg, const TrainProgress& progress) {
  if (cfg.steps == 0) {
    throw Error(ErrorCode::kInvalidArgument, "training needs steps >= 1");
  }
  if (corpus.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "training corpus is empty");
  }
  if (cfg.batch_size == 0 || !(cfg.lr > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch_size and lr must be positive");
  }
  TrainResult result{InitCheckpoint(model, std::move(vocab)), {}};
  Transformer<float> net(result.checkpoint);
  const std::size_t np = net.parameter_count();
  std::vector<double> m(np, 0.0), v(np, 0.0);
  std::vector<float> grad;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::vector<std::vector<TokenId>> batch(cfg.batch_size);
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& seq : batch) seq = corpus[pick(rng)];
    const double loss = net.LossAndParameterGradient(batch, &grad);
    double norm2 = 0.0;
    for (float g : grad) norm2 += double(g) * double(g);
    if (!std::isfinite(loss) || !std::isfinite(norm2)) {
      throw Error(ErrorCode::kDivergedTraining,
                  "non-finite loss at step " + std::to_string(step));
    }
    const double clip = (cfg.grad_clip > 0.0 && std::sqrt(norm2) > cfg.grad_clip)
                            ? cfg.grad_clip / std::sqrt(norm2)
                            : 1.0;
    b1t *= cfg.adam.beta1;
    b2t *= cfg.adam.beta2;
    const double lr = ScheduledLearningRate(cfg, step);
    auto params = net.mutable_parameters();
    for (std::size_t i = 0; i < np; ++i) {
      const double g = double(grad[i]) * clip;
      m[i] = cfg.adam.beta1 * m[i] + (1.0 - cfg.adam.beta1) * g;
      v[i] = cfg.adam.beta2 * v[i] + (1.0 - cfg.adam.beta2) * g * g;
      const double mh = m[i] / (1.0 - b1t);
      const double vh = v[i] / (1.0 - b2t);
      params[i] = static_cast<float>(double(params[i]) -
                                     lr * mh / (std::sqrt(vh) + cfg.adam.epsilon));
    }
    net.RefreshDerived();
    result.losses.push_back(loss);
    if (progress) progress(step, loss);
  }
  net.ExportTo(result.checkpoint);
  return result;
}

double MeanNegLogLikelihood(const Transformer<float>& model,
                            const std::vector<std::vector<TokenId>>& corpus) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : corpus) {
    if (seq.size() < 2) continue;
    const std::size_t k = seq.size() - 1;
    total += model.Loss(seq, LossSpec::SequenceCrossEntropy()) *
             static_cast<double>(k);
    count += k;
  }
  if (count == 0) {
    throw Error(ErrorCode::kInvalidArgument, "no predictable tokens");
  }
  return total / static_cast<double>(count);
}

}  // namespace dama::toylm
