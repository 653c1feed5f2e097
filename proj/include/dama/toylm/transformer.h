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

#ifndef DAMA_TOYLM_TRANSFORMER_H_
#define DAMA_TOYLM_TRANSFORMER_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dama/toylm/checkpoint.h"
#include "dama/toylm/config.h"

namespace dama::toylm {

using TokenId = std::int32_t;

// Activation sites that hooks can read or overwrite. kAttnOut and kMlpOut are
// branch outputs before the residual addition; kLayerOut is the residual
// stream after the block; kEmbedding is the token embedding fed to layer 0.
enum class Site { kEmbedding, kAttnOut, kMlpOut, kLayerOut };

std::string_view SiteName(Site site);

struct SiteRef {
  Site site = Site::kMlpOut;
  std::size_t layer = 0;
  std::size_t token = 0;
};

enum class HookKind { kCapture, kPatch };

struct HookSpec {
  HookKind kind = HookKind::kCapture;
  SiteRef at;
  std::vector<double> payload;  // d_model values, patch hooks only

  static HookSpec Capture(Site site, std::size_t layer, std::size_t token) {
    return {HookKind::kCapture, {site, layer, token}, {}};
  }
  static HookSpec Patch(Site site, std::size_t layer, std::size_t token,
                        std::vector<double> value) {
    return {HookKind::kPatch, {site, layer, token}, std::move(value)};
  }
};

struct NextTokenDistribution {
  std::vector<double> probabilities;
  std::size_t context_length = 0;
};

struct ForwardOutput {
  // distributions[t] is the prediction after reading tokens[0..t].
  std::vector<NextTokenDistribution> distributions;
  // One entry per capture hook, in hook order.
  std::vector<std::vector<double>> captures;
};

// A scalar, differentiable function of the output distributions.
struct LossSpec {
  enum class Kind {
    kConstant,
    kNegLogProb,
    kSequenceCrossEntropy,
    kKlToReference
  };
  Kind kind = Kind::kConstant;
  TokenId target = 0;
  std::size_t position = 0;
  double weight = 1.0;
  // kKlToReference only; caller-owned distribution over the vocabulary.
  std::span<const double> reference;

  static LossSpec Constant() { return {}; }
  // -log P(target | tokens[0..position]).
  static LossSpec NegLogProb(TokenId target, std::size_t position) {
    return {Kind::kNegLogProb, target, position, 1.0, {}};
  }
  // Mean next-token cross-entropy over the sequence.
  static LossSpec SequenceCrossEntropy() {
    return {Kind::kSequenceCrossEntropy, 0, 0, 1.0, {}};
  }
  // weight * KL(P(. | tokens[0..position]) || reference).
  static LossSpec KlToReference(std::span<const double> reference,
                                std::size_t position, double weight) {
    return {Kind::kKlToReference, 0, position, weight, reference};
  }
};

struct SequenceRequest {
  std::span<const TokenId> tokens;
  std::span<const HookSpec> hooks;
};

struct SiteGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Location of one tensor inside the flat parameter vector.
struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

// Executable form of a checkpoint in precision T (float for model mode,
// double for gradient verification). Immutable after construction except
// through the explicit parameter setters; const methods are safe to call
// concurrently.
template <typename T>
class Transformer {
 public:
  explicit Transformer(const ModelCheckpoint& ckpt);
  ~Transformer();
  Transformer(const Transformer&);
  Transformer& operator=(const Transformer&) = delete;

  const ModelConfig& config() const { return config_; }

  ForwardOutput Forward(std::span<const TokenId> tokens,
                        std::span<const HookSpec> hooks = {}) const;

  // Same as calling Forward per request, packed into one pass.
  std::vector<ForwardOutput> ForwardBatch(
      std::span<const SequenceRequest> requests) const;

  // Gradient of `loss` with respect to the activation at `site`, after
  // applying `hooks`. If the site itself is patched, this is the gradient
  // with respect to the patched value.
  SiteGradient GradWrtActivation(std::span<const TokenId> tokens,
                                 const SiteRef& site, const LossSpec& loss,
                                 std::span<const HookSpec> hooks = {}) const;

  // One site and one loss per request, evaluated in a single packed pass.
  std::vector<SiteGradient> GradWrtActivationBatch(
      std::span<const SequenceRequest> requests, std::span<const SiteRef> sites,
      std::span<const LossSpec> losses) const;

  double Loss(std::span<const TokenId> tokens, const LossSpec& loss,
              std::span<const HookSpec> hooks = {}) const;

  // Mean next-token cross-entropy over every predicted position of every
  // sequence; `grad` (resized to parameter_count()) receives its gradient.
  double LossAndParameterGradient(
      std::span<const std::vector<TokenId>> batch, std::vector<T>* grad) const;

  const std::vector<TensorSlot>& layout() const { return layout_; }
  const TensorSlot& slot(const std::string& name) const;
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const T> parameters() const { return params_; }
  std::span<T> mutable_parameters() { return params_; }
  // Must be called after writing through mutable_parameters().
  void RefreshDerived();

  // Writes the current parameters (rounded to f32) into `ckpt`, which must
  // share this model's config.
  void ExportTo(ModelCheckpoint& ckpt) const;

  class MlpTail;
  // Prepares repeated evaluation of hook-free sequences whose MLP output at
  // `layer`, last token, is replaced by a shared vector z. Work below the
  // replaced site is done once here.
  MlpTail MakeMlpTail(std::span<const SequenceRequest> requests,
                      std::size_t layer) const;

 private:
  struct Workspace;
  struct LayerOffsets {
    std::size_t attn_norm, wq, wk, wv, wo, mlp_norm, w_in, w_gate, w_out;
  };

  void ValidateTokens(std::span<const TokenId> tokens) const;
  void ValidateHooks(std::span<const TokenId> tokens,
                     std::span<const HookSpec> hooks) const;
  void RunForward(std::span<const SequenceRequest> requests,
                  Workspace& ws) const;
  // dlogits is rows x vocab. Each site is recorded into site_outputs; when
  // grad is null the pass stops once every site has been reached.
  void RunBackward(Workspace& ws, std::vector<T>& dlogits, T* grad,
                   std::span<const std::pair<SiteRef, std::size_t>> sites,
                   std::vector<std::vector<double>>* site_outputs) const;
  double FillLossGradient(const Workspace& ws, std::size_t seq,
                          const LossSpec& loss, std::vector<T>& dlogits) const;

  ModelConfig config_;
  std::vector<TensorSlot> layout_;
  std::vector<T> params_;
  std::vector<T> transposed_;  // same offsets; matrices stored in x out
  std::vector<LayerOffsets> layers_;
  std::size_t embedding_ = 0, final_norm_ = 0, unembedding_ = 0;
  std::vector<T> rope_cos_, rope_sin_;  // max_seq x head_dim / 2
};

template <typename T>
class Transformer<T>::MlpTail {
 public:
  struct Result {
    std::vector<double> losses;           // per sequence
    double total_loss = 0.0;
    std::vector<double> gradient;         // d total / d z (when requested)
    std::vector<std::vector<double>> last_probabilities;
  };

  MlpTail(MlpTail&&) noexcept;
  ~MlpTail();

  std::size_t size() const;
  // Clean MLP output at the replaced site, per sequence.
  const std::vector<double>& clean_value(std::size_t seq) const;
  // Every loss must be scored at its sequence's last position. Matches
  // Forward/GradWrtActivation with a patch of z at each sequence.
  Result Evaluate(const std::vector<double>& z, std::span<const LossSpec> losses,
                  bool want_gradient) const;

 private:
  friend class Transformer<T>;
  struct State;
  explicit MlpTail(std::unique_ptr<State> state);
  std::unique_ptr<State> state_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace dama::toylm

#endif  // DAMA_TOYLM_TRANSFORMER_H_
