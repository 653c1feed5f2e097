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

#ifndef DAMA_DAMAEDIT_DAMA_H_
#define DAMA_DAMAEDIT_DAMA_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dama/datagen/lexicon.h"
#include "dama/datagen/templates.h"
#include "dama/linalg/matrix.h"
#include "dama/linalg/pls.h"
#include "dama/linalg/projection.h"
#include "dama/toylm/checkpoint.h"
#include "dama/toylm/transformer.h"

namespace dama::damaedit {

using toylm::TokenId;

struct ValueOptConfig {
  std::size_t steps = 20;
  double lr = 0.5;
  double lambda1 = 0.0625;  // weight of the summed KL over the neutral pool
  double lambda2 = 0.2;     // weight of ||z||^2
  std::size_t kl_prompt_count = 32;

  void Validate() const;
};

// What the PLS predictor block is paired with.
enum class PlsTarget {
  // [V+, V0, V-] against [U^, U^, U^]. After per-prompt centering the
  // cross-covariance of these blocks is identically zero, so this target is
  // only meaningful for uncentered values.
  kStackedValues,
  // V+ - V- against U^; invariant to the per-prompt centering.
  kPronounContrast,
};

struct EditConfig {
  double layer_lo_pct = 65.0;
  double layer_hi_pct = 93.0;
  std::optional<std::size_t> d_n;  // unset: d_model / 4
  ValueOptConfig value_opt;
  PlsTarget pls_target = PlsTarget::kPronounContrast;

  std::size_t ResolvedDn(std::size_t d_model) const;
  void Validate(std::size_t d_model) const;
};

struct LayerBand {
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

// floor(pct / 100 * n_layers) for both ends; raises kEmptyLayerBand when the
// band holds no layer.
LayerBand ComputeLayerBand(std::size_t n_layers, double lo_pct, double hi_pct);

struct KeyMatrices {
  linalg::MatrixD u;      // d_ff x n, MLP inner activations at the last token
  linalg::MatrixD u_hat;  // d_model x n, MLP branch output at the last token
};

KeyMatrices ExtractKeys(const toylm::ModelCheckpoint& ckpt,
                        std::span<const std::vector<TokenId>> prompts,
                        std::size_t layer);

struct ValueResult {
  std::vector<double> value;
  double initial_probability = 0.0;  // P(pronoun) with the clean output
  double final_probability = 0.0;    // P(pronoun) with the returned value
  std::vector<double> losses;        // objective before every step
};

// Minimizes, over the MLP output z at `layer` and the last prompt token,
//   -log P(pronoun | prompt) + lambda1 * sum_pool KL(P_z || P) + lambda2 |z|^2
// by Adam from the clean output. The pool prompts are patched at their own
// last token with the same z.
class ValueOptimizer {
 public:
  ValueOptimizer(const toylm::Transformer<float>& model, std::size_t layer,
                 std::span<const std::vector<TokenId>> kl_pool,
                 const ValueOptConfig& cfg);
  ~ValueOptimizer();

  ValueResult Optimize(std::span<const TokenId> prompt, TokenId pronoun) const;
  // Same as Optimize for three pronouns sharing one prompt pass.
  std::array<ValueResult, 3> OptimizeAll(std::span<const TokenId> prompt,
                                         const std::array<TokenId, 3>& pronouns)
      const;

 private:
  ValueResult Run(const toylm::Transformer<float>::MlpTail& prompt_tail,
                  std::size_t last, TokenId pronoun) const;

  const toylm::Transformer<float>& model_;
  std::size_t layer_;
  ValueOptConfig cfg_;
  std::optional<toylm::Transformer<float>::MlpTail> pool_;
  std::vector<std::vector<double>> pool_reference_;
  std::vector<std::size_t> pool_last_;
};

ValueResult OptimizeValue(const toylm::ModelCheckpoint& ckpt,
                          std::span<const TokenId> prompt, std::size_t layer,
                          TokenId pronoun, const ValueOptConfig& cfg,
                          std::span<const std::vector<TokenId>> kl_pool);

// Values of one prompt ordered {he, they, she}; an empty vector is missing.
using PronounValues = std::array<std::vector<double>, 3>;

struct KeyValueBatch {
  linalg::MatrixD u_hat;  // d_model x n
  linalg::MatrixD v_plus, v_zero, v_minus;  // d_model x n, per-prompt centered
};

KeyValueBatch AssembleBatch(const std::vector<PronounValues>& values,
                            const linalg::MatrixD& u_hat);

struct LayerProjection {
  linalg::PlsFit pls;
  linalg::Projection projection;
};

LayerProjection FitLayerProjection(const KeyValueBatch& batch, std::size_t d_n,
                                   PlsTarget target);

struct ProjectionEdit {
  std::size_t layer = 0;
  std::size_t d_n = 0;
  std::size_t n_prompts = 0;
  linalg::PlsFit pls;
  linalg::Projection projection;
  double pre_norm = 0.0;   // ||W_out||_F before the edit
  double post_norm = 0.0;  // ||P W_out||_F
  double mean_initial_probability = 0.0;
  double mean_final_probability = 0.0;
};

struct DamaResult {
  toylm::ModelCheckpoint checkpoint;
  std::vector<ProjectionEdit> edits;
};

// Called before every value optimization with (layer, done, total).
using DamaProgress =
    std::function<void(std::size_t, std::size_t, std::size_t)>;

// Keys come from every (profession, template) prompt. Layers of the band are
// edited in ascending order and each layer's keys and values are taken from
// the checkpoint as already edited below it.
DamaResult RunDama(const toylm::ModelCheckpoint& ckpt,
                   const std::vector<datagen::ProfessionEntry>& professions,
                   const std::vector<datagen::PromptTemplate>& templates,
                   std::span<const std::vector<TokenId>> kl_pool,
                   const EditConfig& cfg, const DamaProgress& progress = {});

std::string EditReportJson(const std::vector<ProjectionEdit>& edits);

}  // namespace dama::damaedit

#endif  // DAMA_DAMAEDIT_DAMA_H_
