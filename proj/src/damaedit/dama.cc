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

#include "dama/damaedit/dama.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "json.hpp"

#include "dama/common/error.h"
#include "dama/datagen/vocabulary.h"
#include "dama/toylm/train.h"

namespace dama::damaedit {
namespace {

using linalg::MatrixD;
using toylm::Site;

MatrixD TensorAsDouble(const toylm::ModelCheckpoint& ckpt,
                       const std::string& name) {
  return linalg::Cast<double>(ckpt.at(name).values);
}

std::vector<toylm::SequenceRequest> Requests(
    std::span<const std::vector<TokenId>> prompts) {
  std::vector<toylm::SequenceRequest> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back({p, {}});
  return out;
}

}  // namespace

void ValueOptConfig::Validate() const {
  if (steps == 0) {
    throw Error(ErrorCode::kInvalidArgument, "value optimization steps must be >= 1");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw Error(ErrorCode::kInvalidArgument, "value learning rate must be > 0");
  }
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) ||
      !std::isfinite(lambda2)) {
    throw Error(ErrorCode::kInvalidArgument, "regularization weights must be >= 0");
  }
}

std::size_t EditConfig::ResolvedDn(std::size_t d_model) const {
  return d_n.value_or(d_model / 4);
}

void EditConfig::Validate(std::size_t d_model) const {
  if (!(layer_lo_pct >= 0.0) || !(layer_lo_pct < layer_hi_pct) ||
      !(layer_hi_pct <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer percentiles must satisfy 0 <= lo < hi <= 100");
  }
  const std::size_t dn = ResolvedDn(d_model);
  if (dn == 0 || dn >= d_model) {
    throw Error(ErrorCode::kInvalidArgument,
                "d_n must satisfy 1 <= d_n < d_model, got " + std::to_string(dn));
  }
  value_opt.Validate();
}

LayerBand ComputeLayerBand(std::size_t n_layers, double lo_pct, double hi_pct) {
  if (!(lo_pct >= 0.0) || !(lo_pct < hi_pct) || !(hi_pct <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer percentiles must satisfy 0 <= lo < hi <= 100");
  }
  const double n = static_cast<double>(n_layers);
  LayerBand band;
  band.begin = static_cast<std::size_t>(std::floor(lo_pct / 100.0 * n));
  band.end = std::min(n_layers,
                      static_cast<std::size_t>(std::floor(hi_pct / 100.0 * n)));
  if (band.begin >= band.end) {
    throw Error(ErrorCode::kEmptyLayerBand,
                "percentiles " + std::to_string(lo_pct) + ".." +
                    std::to_string(hi_pct) + " select no layer of " +
                    std::to_string(n_layers));
  }
  return band;
}

KeyMatrices ExtractKeys(const toylm::ModelCheckpoint& ckpt,
                        std::span<const std::vector<TokenId>> prompts,
                        std::size_t layer) {
  const toylm::ModelConfig& cfg = ckpt.config;
  if (prompts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "key extraction needs prompts");
  }
  if (layer >= cfg.n_layers) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer " + std::to_string(layer) + " out of range");
  }
  const std::size_t d = cfg.d_model, f = cfg.d_ff, n = prompts.size();
  std::vector<std::vector<toylm::HookSpec>> hooks(n);
  std::vector<toylm::SequenceRequest> reqs;
  for (std::size_t i = 0; i < n; ++i) {
    if (prompts[i].empty()) {
      throw Error(ErrorCode::kInvalidArgument, "empty prompt");
    }
    const std::size_t last = prompts[i].size() - 1;
    hooks[i] = {layer == 0
                    ? toylm::HookSpec::Capture(Site::kEmbedding, 0, last)
                    : toylm::HookSpec::Capture(Site::kLayerOut, layer - 1, last),
                toylm::HookSpec::Capture(Site::kAttnOut, layer, last),
                toylm::HookSpec::Capture(Site::kMlpOut, layer, last)};
    reqs.push_back({prompts[i], hooks[i]});
  }
  const toylm::Transformer<float> net(ckpt);
  const auto outs = net.ForwardBatch(reqs);

  const MatrixD gain = TensorAsDouble(ckpt, toylm::names::MlpNorm(layer));
  const MatrixD w_gate = TensorAsDouble(ckpt, toylm::names::WGate(layer));
  const MatrixD w_in = TensorAsDouble(ckpt, toylm::names::WIn(layer));
  KeyMatrices keys{MatrixD(f, n), MatrixD(d, n)};
  std::vector<double> h(d), normed(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cap = outs[i].captures;
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      h[j] = cap[0][j] + cap[1][j];
      ms += h[j] * h[j];
    }
    const double inv = 1.0 / std::sqrt(ms / static_cast<double>(d) +
                                       toylm::kRmsEpsilon);
    for (std::size_t j = 0; j < d; ++j) {
      normed[j] = h[j] * inv * gain.data()[j];
    }
    const std::vector<double> g = linalg::MatVec(w_gate, normed);
    const std::vector<double> up = linalg::MatVec(w_in, normed);
    for (std::size_t r = 0; r < f; ++r) {
      keys.u(r, i) = g[r] / (1.0 + std::exp(-g[r])) * up[r];
    }
    keys.u_hat.set_col(i, cap[2]);
  }
  return keys;
}

ValueOptimizer::ValueOptimizer(const toylm::Transformer<float>& model,
                               std::size_t layer,
                               std::span<const std::vector<TokenId>> kl_pool,
                               const ValueOptConfig& cfg)
    : model_(model), layer_(layer), cfg_(cfg) {
  cfg_.Validate();
  if (layer >= model.config().n_layers) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer " + std::to_string(layer) + " out of range");
  }
  if (kl_pool.empty() || cfg_.lambda1 == 0.0) return;
  const auto reqs = Requests(kl_pool);
  const auto outs = model.ForwardBatch(reqs);
  for (std::size_t i = 0; i < kl_pool.size(); ++i) {
    pool_reference_.push_back(outs[i].distributions.back().probabilities);
    pool_last_.push_back(kl_pool[i].size() - 1);
  }
  pool_.emplace(model.MakeMlpTail(reqs, layer));
}

ValueOptimizer::~ValueOptimizer() = default;

ValueResult ValueOptimizer::Run(
    const toylm::Transformer<float>::MlpTail& prompt_tail, std::size_t last,
    TokenId pronoun) const {
  const std::size_t d = model_.config().d_model;
  std::vector<toylm::LossSpec> prompt_loss = {
      toylm::LossSpec::NegLogProb(pronoun, last)};
  std::vector<toylm::LossSpec> pool_losses;
  for (std::size_t i = 0; i < pool_reference_.size(); ++i) {
    pool_losses.push_back(toylm::LossSpec::KlToReference(
        pool_reference_[i], pool_last_[i], cfg_.lambda1));
  }
  const toylm::AdamConstants adam;

  ValueResult res;
  std::vector<double> z = prompt_tail.clean_value(0);
  std::vector<double> m(d, 0.0), v(d, 0.0);
  auto objective = [&](bool grad, std::vector<double>* g, double* p_target) {
    const auto pr = prompt_tail.Evaluate(z, prompt_loss, grad);
    double total = pr.total_loss;
    *p_target = std::exp(-pr.losses[0]);
    if (grad) *g = pr.gradient;
    if (pool_) {
      const auto pool = pool_->Evaluate(z, pool_losses, grad);
      total += pool.total_loss;
      if (grad) {
        for (std::size_t j = 0; j < d; ++j) (*g)[j] += pool.gradient[j];
      }
    }
    double zz = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      zz += z[j] * z[j];
      if (grad) (*g)[j] += 2.0 * cfg_.lambda2 * z[j];
    }
    total += cfg_.lambda2 * zz;
    if (!std::isfinite(total)) {
      throw Error(ErrorCode::kDivergedOptimization,
                  "value objective became non-finite");
    }
    return total;
  };
  std::vector<double> g;
  double p_target = 0.0;
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t step = 0; step < cfg_.steps; ++step) {
    res.losses.push_back(objective(true, &g, &p_target));
    if (step == 0) res.initial_probability = p_target;
    b1t *= adam.beta1;
    b2t *= adam.beta2;
    for (std::size_t j = 0; j < d; ++j) {
      m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * g[j];
      v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * g[j] * g[j];
      const double mh = m[j] / (1.0 - b1t);
      const double vh = v[j] / (1.0 - b2t);
      z[j] -= cfg_.lr * mh / (std::sqrt(vh) + adam.epsilon);
    }
  }
  objective(false, nullptr, &p_target);
  res.final_probability = p_target;
  res.value = std::move(z);
  return res;
}

ValueResult ValueOptimizer::Optimize(std::span<const TokenId> prompt,
                                     TokenId pronoun) const {
  const toylm::SequenceRequest req[] = {{prompt, {}}};
  return Run(model_.MakeMlpTail(req, layer_), prompt.size() - 1, pronoun);
}

std::array<ValueResult, 3> ValueOptimizer::OptimizeAll(
    std::span<const TokenId> prompt,
    const std::array<TokenId, 3>& pronouns) const {
  const toylm::SequenceRequest req[] = {{prompt, {}}};
  const auto tail = model_.MakeMlpTail(req, layer_);
  const std::size_t last = prompt.size() - 1;
  return {Run(tail, last, pronouns[0]), Run(tail, last, pronouns[1]),
          Run(tail, last, pronouns[2])};
}

ValueResult OptimizeValue(const toylm::ModelCheckpoint& ckpt,
                          std::span<const TokenId> prompt, std::size_t layer,
                          TokenId pronoun, const ValueOptConfig& cfg,
                          std::span<const std::vector<TokenId>> kl_pool) {
  const toylm::Transformer<float> net(ckpt);
  const ValueOptimizer opt(net, layer, kl_pool, cfg);
  return opt.Optimize(prompt, pronoun);
}

KeyValueBatch AssembleBatch(const std::vector<PronounValues>& values,
                            const MatrixD& u_hat) {
  if (values.size() != u_hat.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(values.size()) + " value triples for " +
                    std::to_string(u_hat.cols()) + " keys");
  }
  const std::size_t d = u_hat.rows(), n = values.size();
  KeyValueBatch batch{u_hat, MatrixD(d, n), MatrixD(d, n), MatrixD(d, n)};
  MatrixD* out[3] = {&batch.v_plus, &batch.v_zero, &batch.v_minus};
  std::vector<double> mean(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (values[i][k].empty()) {
        throw Error(ErrorCode::kMissingPronounValue,
                    "prompt " + std::to_string(i) + " lacks pronoun value " +
                        std::to_string(k));
      }
      if (values[i][k].size() != d) {
        throw Error(ErrorCode::kDimensionMismatch, "value has wrong dimension");
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = (values[i][0][j] + values[i][1][j] + values[i][2][j]) / 3.0;
    }
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        (*out[k])(j, i) = values[i][k][j] - mean[j];
      }
    }
  }
  return batch;
}

LayerProjection FitLayerProjection(const KeyValueBatch& batch, std::size_t d_n,
                                   PlsTarget target) {
  if (d_n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "d_n must be >= 1");
  }
  MatrixD x, y;
  if (target == PlsTarget::kStackedValues) {
    x = linalg::HorizontalConcat({batch.v_plus, batch.v_zero, batch.v_minus});
    y = linalg::HorizontalConcat({batch.u_hat, batch.u_hat, batch.u_hat});
  } else {
    x = linalg::Subtract(batch.v_plus, batch.v_minus);
    y = batch.u_hat;
  }
  if (x.cols() < d_n) {
    throw Error(ErrorCode::kInvalidArgument,
                std::to_string(x.cols()) + " samples cannot support d_n = " +
                    std::to_string(d_n));
  }
  LayerProjection out;
  out.pls = linalg::FitPls(x, y, d_n);
  out.projection = linalg::ProjectionFromBasis(out.pls.b1);
  return out;
}

DamaResult RunDama(const toylm::ModelCheckpoint& ckpt,
                   const std::vector<datagen::ProfessionEntry>& professions,
                   const std::vector<datagen::PromptTemplate>& templates,
                   std::span<const std::vector<TokenId>> kl_pool,
                   const EditConfig& cfg, const DamaProgress& progress) {
  const toylm::ModelConfig& mc = ckpt.config;
  cfg.Validate(mc.d_model);
  const LayerBand band =
      ComputeLayerBand(mc.n_layers, cfg.layer_lo_pct, cfg.layer_hi_pct);
  if (professions.empty() || templates.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "DAMA needs at least one profession and one template");
  }
  const datagen::Vocabulary vocab(ckpt.vocab);
  const std::array<TokenId, 3> pronouns = {
      vocab.Id(datagen::kHe), vocab.Id(datagen::kThey), vocab.Id(datagen::kShe)};
  std::vector<std::vector<TokenId>> prompts;
  for (const auto& tpl : templates) {
    for (const auto& p : professions) {
      prompts.push_back(datagen::EncodePrompt(vocab, tpl, p.word).tokens);
    }
  }
  const std::size_t pool_size =
      std::min(kl_pool.size(), cfg.value_opt.kl_prompt_count);
  const auto pool = kl_pool.first(pool_size);
  const std::size_t d_n = cfg.ResolvedDn(mc.d_model);

  DamaResult result{ckpt, {}};
  const std::size_t total = prompts.size() * (band.end - band.begin);
  std::size_t done = 0;
  for (std::size_t layer = band.begin; layer < band.end; ++layer) {
    const KeyMatrices keys = ExtractKeys(result.checkpoint, prompts, layer);
    std::vector<PronounValues> values(prompts.size());
    ProjectionEdit edit;
    {
      const toylm::Transformer<float> net(result.checkpoint);
      const ValueOptimizer opt(net, layer, pool, cfg.value_opt);
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (progress) progress(layer, done, total);
        auto r = opt.OptimizeAll(prompts[i], pronouns);
        for (std::size_t k = 0; k < 3; ++k) {
          edit.mean_initial_probability += r[k].initial_probability;
          edit.mean_final_probability += r[k].final_probability;
          values[i][k] = std::move(r[k].value);
        }
        ++done;
      }
    }
    const double count = 3.0 * static_cast<double>(prompts.size());
    edit.mean_initial_probability /= count;
    edit.mean_final_probability /= count;
    const KeyValueBatch batch = AssembleBatch(values, keys.u_hat);
    LayerProjection lp = FitLayerProjection(batch, d_n, cfg.pls_target);
    const std::string w_name = toylm::names::WOut(layer);
    edit.layer = layer;
    edit.d_n = d_n;
    edit.n_prompts = prompts.size();
    edit.pre_norm =
        linalg::FrobeniusNorm(TensorAsDouble(result.checkpoint, w_name));
    result.checkpoint =
        toylm::ApplyWeightEdit(result.checkpoint, layer, lp.projection.matrix);
    edit.post_norm =
        linalg::FrobeniusNorm(TensorAsDouble(result.checkpoint, w_name));
    edit.pls = std::move(lp.pls);
    edit.projection = std::move(lp.projection);
    result.edits.push_back(std::move(edit));
  }
  return result;
}

std::string EditReportJson(const std::vector<ProjectionEdit>& edits) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const ProjectionEdit& e : edits) {
    nlohmann::ordered_json j;
    j["layer"] = e.layer;
    j["d_n"] = e.d_n;
    j["n_prompts"] = e.n_prompts;
    j["pls_converged"] = e.pls.converged;
    j["pls_iterations"] = e.pls.iterations;
    j["pre_norm"] = e.pre_norm;
    j["post_norm"] = e.post_norm;
    j["projection_trace"] = linalg::Trace(e.projection.matrix);
    j["mean_initial_probability"] = e.mean_initial_probability;
    j["mean_final_probability"] = e.mean_final_probability;
    layers.push_back(std::move(j));
  }
  return layers.dump(2);
}

}  // namespace dama::damaedit
