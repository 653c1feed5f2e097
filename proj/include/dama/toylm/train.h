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

#ifndef DAMA_TOYLM_TRAIN_H_
#define DAMA_TOYLM_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dama/toylm/checkpoint.h"
#include "dama/toylm/transformer.h"

namespace dama::toylm {

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t steps = 3000;
  double lr = 3e-3;
  std::size_t batch_size = 32;
  std::size_t warmup_steps = 100;
  // Cosine decay after warmup ends at lr * min_lr_ratio.
  double min_lr_ratio = 0.1;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  AdamConstants adam;
  std::uint64_t seed = 1;  // batch sampling
};

// Learning rate applied at 0-based step `step`.
double ScheduledLearningRate(const TrainConfig& cfg, std::size_t step);

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<double> losses;  // mean batch loss per step
};

using TrainProgress = std::function<void(std::size_t step, double loss)>;

// Next-token cross-entropy training from InitCheckpoint(model, vocab).
// Single-threaded and bit-reproducible for fixed inputs. Raises
// kInvalidArgument for steps == 0 or an empty corpus and kDivergedTraining
// if the loss or a gradient becomes non-finite.
TrainResult Train(const ModelConfig& model, std::vector<std::string> vocab,
                  const std::vector<std::vector<TokenId>>& corpus,
                  const TrainConfig& cfg, const TrainProgress& progress = {});

// Mean next-token negative log-likelihood per predicted token.
double MeanNegLogLikelihood(const Transformer<float>& model,
                            const std::vector<std::vector<TokenId>>& corpus);

}  // namespace dama::toylm

#endif  // DAMA_TOYLM_TRAIN_H_
