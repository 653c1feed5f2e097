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

#include "dama/toylm/transformer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "dama/common/error.h"
#include "kernels.h"

namespace dama::toylm {
namespace {

constexpr std::size_t kSiteCount = 4;

std::size_t SiteIndex(Site s) { return static_cast<std::size_t>(s); }

void RmsForward(std::size_t n, std::size_t d, const auto* x, const auto* g,
                auto* inv, auto* out) {
  using T = std::remove_cvref_t<decltype(*x)>;
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = x + r * d;
    T ms = T(0);
    for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
    ms /= static_cast<T>(d);
    const T iv = T(1) / std::sqrt(ms + static_cast<T>(kRmsEpsilon));
    inv[r] = iv;
    T* o = out + r * d;
    for (std::size_t j = 0; j < d; ++j) o[j] = xr[j] * iv * g[j];
  }
}

// dx (+)= d rms(x)/dx * dout; dg += dout * x * inv when dg is non-null.
template <typename T>
void RmsBackward(std::size_t n, std::size_t d, const T* x, const T* g,
                 const T* inv, const T* dout, T* dx, T* dg) {
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = x + r * d;
    const T* dr = dout + r * d;
    T* dxr = dx + r * d;
    const T iv = inv[r];
    T s = T(0);
    for (std::size_t j = 0; j < d; ++j) s += g[j] * dr[j] * xr[j];
    const T coef = iv * iv * iv * s / static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dxr[j] += iv * g[j] * dr[j] - xr[j] * coef;
    }
    if (dg != nullptr) {
      for (std::size_t j = 0; j < d; ++j) dg[j] += dr[j] * xr[j] * iv;
    }
  }
}

template <typename T>
T Sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

[[noreturn]] void HookError(const std::string& what) {
  throw Error(ErrorCode::kHookOutOfRange, what);
}

}  // namespace

std::string_view SiteName(Site site) {
  switch (site) {
    case Site::kEmbedding:
      return "embedding";
    case Site::kAttnOut:
      return "attn_out";
    case Site::kMlpOut:
      return "mlp_out";
    case Site::kLayerOut:
      return "layer_out";
  }
  return "unknown";
}

template <typename T>
struct Transformer<T>::Workspace {
  struct Layer {
    std::vector<T> x, inv1, n1, q, k, v, probs, att, h1, inv2, n2, gate, up,
        act;
  };
  struct Bucket {
    std::vector<std::pair<std::size_t, const HookSpec*>> patches;
    std::vector<std::pair<std::size_t, std::size_t>> captures;  // row, slot
    std::vector<char> patched;  // per row
  };

  std::size_t rows = 0;
  std::vector<std::size_t> offset, length, prob_offset;
  std::vector<TokenId> tokens;
  std::vector<std::size_t> position;
  std::vector<Layer> layers;
  std::vector<T> y, invf, nf, logits;
  std::vector<double> probs;  // rows x vocab
  // Indexed by site * n_layers + layer (embedding uses layer 0).
  std::vector<Bucket> buckets;
  // captures[request][hook order among captures]
  std::vector<std::vector<std::vector<double>>> captures;
  std::vector<std::size_t> capture_owner;  // slot -> request
  std::vector<std::size_t> capture_index;  // slot -> index in request
};

template <typename T>
Transformer<T>::Transformer(const ModelCheckpoint& ckpt)
    : config_(ckpt.config) {
  ckpt.Validate();
  config_.Validate();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    layout_.push_back({name, offset, t.values.rows(), t.values.cols()});
    offset += t.values.size();
  }
  params_.resize(offset);
  transposed_.resize(offset);
  for (const TensorSlot& s : layout_) {
    const auto& src = ckpt.at(s.name).values;
    for (std::size_t i = 0; i < src.size(); ++i) {
      params_[s.offset + i] = static_cast<T>(src.data()[i]);
    }
  }
  embedding_ = slot(names::kEmbedding).offset;
  final_norm_ = slot(names::kFinalNorm).offset;
  unembedding_ = slot(names::kUnembedding).offset;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    layers_.push_back({slot(names::AttnNorm(l)).offset,
                       slot(names::Wq(l)).offset, slot(names::Wk(l)).offset,
                       slot(names::Wv(l)).offset, slot(names::Wo(l)).offset,
                       slot(names::MlpNorm(l)).offset,
                       slot(names::WIn(l)).offset,
                       slot(names::WGate(l)).offset,
                       slot(names::WOut(l)).offset});
  }
  const std::size_t half = config_.head_dim() / 2;
  rope_cos_.resize(config_.max_seq * half);
  rope_sin_.resize(config_.max_seq * half);
  for (std::size_t p = 0; p < config_.max_seq; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(
          kRopeBase, -2.0 * static_cast<double>(i) /
                         static_cast<double>(config_.head_dim()));
      const double angle = static_cast<double>(p) * freq;
      rope_cos_[p * half + i] = static_cast<T>(std::cos(angle));
      rope_sin_[p * half + i] = static_cast<T>(std::sin(angle));
    }
  }
  RefreshDerived();
}

template <typename T>
Transformer<T>::~Transformer() = default;

template <typename T>
Transformer<T>::Transformer(const Transformer&) = default;

template <typename T>
const TensorSlot& Transformer<T>::slot(const std::string& name) const {
  for (const TensorSlot& s : layout_) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, "no tensor named " + name);
}

template <typename T>
void Transformer<T>::RefreshDerived() {
  for (const TensorSlot& s : layout_) {
    const T* src = params_.data() + s.offset;
    T* dst = transposed_.data() + s.offset;
    for (std::size_t r = 0; r < s.rows; ++r) {
      for (std::size_t c = 0; c < s.cols; ++c) {
        dst[c * s.rows + r] = src[r * s.cols + c];
      }
    }
  }
}

template <typename T>
void Transformer<T>::ExportTo(ModelCheckpoint& ckpt) const {
  if (!(ckpt.config == config_)) {
    throw Error(ErrorCode::kInvalidArgument,
                "export target has a different config");
  }
  for (const TensorSlot& s : layout_) {
    auto& dst = ckpt.at(s.name).values;
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst.data()[i] = static_cast<float>(params_[s.offset + i]);
    }
  }
}

template <typename T>
void Transformer<T>::ValidateTokens(std::span<const TokenId> tokens) const {
  if (tokens.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "token sequence is empty");
  }
  if (tokens.size() > config_.max_seq) {
    throw Error(ErrorCode::kInvalidArgument,
                "sequence of length " + std::to_string(tokens.size()) +
                    " exceeds max_seq " + std::to_string(config_.max_seq));
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw Error(ErrorCode::kBadToken,
                  "token id " + std::to_string(t) + " out of vocabulary");
    }
  }
}

namespace {
void ValidateSite(const SiteRef& at, std::size_t n_layers, std::size_t len) {
  if (at.layer >= n_layers) {
    HookError("hook layer " + std::to_string(at.layer) + " out of range");
  }
  if (at.token >= len) {
    HookError("hook token " + std::to_string(at.token) + " out of range");
  }
}
}  // namespace

template <typename T>
void Transformer<T>::ValidateHooks(std::span<const TokenId> tokens,
                                   std::span<const HookSpec> hooks) const {
  for (const HookSpec& h : hooks) {
    ValidateSite(h.at, config_.n_layers, tokens.size());
    if (h.kind == HookKind::kPatch) {
      if (h.payload.size() != config_.d_model) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "patch payload must have d_model entries");
      }
      for (double v : h.payload) {
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::kInvalidArgument, "patch payload not finite");
        }
      }
    } else if (!h.payload.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "capture hooks carry no payload");
    }
  }
}

template <typename T>
void Transformer<T>::RunForward(std::span<const SequenceRequest> requests,
                                Workspace& ws) const {
  const std::size_t d = config_.d_model;
  const std::size_t f = config_.d_ff;
  const std::size_t nv = config_.vocab_size;
  const std::size_t nl = config_.n_layers;
  const std::size_t nh = config_.n_heads;
  const std::size_t hd = config_.head_dim();
  const std::size_t half = hd / 2;

  std::size_t rows = 0, prob_total = 0;
  for (const SequenceRequest& req : requests) {
    ValidateTokens(req.tokens);
    ValidateHooks(req.tokens, req.hooks);
    ws.offset.push_back(rows);
    ws.length.push_back(req.tokens.size());
    ws.prob_offset.push_back(prob_total);
    for (std::size_t t = 0; t < req.tokens.size(); ++t) {
      ws.tokens.push_back(req.tokens[t]);
      ws.position.push_back(t);
    }
    rows += req.tokens.size();
    prob_total += nh * req.tokens.size() * req.tokens.size();
  }
  ws.rows = rows;
  const std::size_t n = rows;

  ws.buckets.assign(kSiteCount * nl, {});
  for (auto& b : ws.buckets) b.patched.assign(n, 0);
  ws.captures.assign(requests.size(), {});
  for (std::size_t q = 0; q < requests.size(); ++q) {
    for (const HookSpec& h : requests[q].hooks) {
      const std::size_t layer = h.at.site == Site::kEmbedding ? 0 : h.at.layer;
      auto& b = ws.buckets[SiteIndex(h.at.site) * nl + layer];
      const std::size_t row = ws.offset[q] + h.at.token;
      if (h.kind == HookKind::kPatch) {
        b.patches.emplace_back(row, &h);
        b.patched[row] = 1;
      } else {
        const std::size_t slot_id = ws.capture_owner.size();
        ws.capture_owner.push_back(q);
        ws.capture_index.push_back(ws.captures[q].size());
        ws.captures[q].emplace_back();
        b.captures.emplace_back(row, slot_id);
      }
    }
  }
  auto apply_hooks = [&](Site site, std::size_t layer, T* act) {
    auto& b = ws.buckets[SiteIndex(site) * nl + layer];
    for (const auto& [row, hook] : b.patches) {
      for (std::size_t j = 0; j < d; ++j) {
        act[row * d + j] = static_cast<T>(hook->payload[j]);
      }
    }
    for (const auto& [row, slot_id] : b.captures) {
      auto& out =
          ws.captures[ws.capture_owner[slot_id]][ws.capture_index[slot_id]];
      out.assign(act + row * d, act + (row + 1) * d);
    }
  };

  const T* p = params_.data();
  const T* pt = transposed_.data();
  std::vector<T> x(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const T* e = p + embedding_ + static_cast<std::size_t>(ws.tokens[r]) * d;
    std::copy(e, e + d, x.begin() + r * d);
  }
  apply_hooks(Site::kEmbedding, 0, x.data());

  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<T> branch(n * d), scores;
  ws.layers.resize(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    const LayerOffsets& lo = layers_[l];
    auto& c = ws.layers[l];
    c.x = x;
    c.inv1.resize(n);
    c.n1.resize(n * d);
    RmsForward(n, d, c.x.data(), p + lo.attn_norm, c.inv1.data(), c.n1.data());
    c.q.resize(n * d);
    c.k.resize(n * d);
    c.v.resize(n * d);
    kernels::MatMul(n, d, d, c.n1.data(), pt + lo.wq, c.q.data(), false);
    kernels::MatMul(n, d, d, c.n1.data(), pt + lo.wk, c.k.data(), false);
    kernels::MatMul(n, d, d, c.n1.data(), pt + lo.wv, c.v.data(), false);
    for (std::size_t r = 0; r < n; ++r) {
      const T* cs = rope_cos_.data() + ws.position[r] * half;
      const T* sn = rope_sin_.data() + ws.position[r] * half;
      for (T* m : {c.q.data() + r * d, c.k.data() + r * d}) {
        for (std::size_t h = 0; h < nh; ++h) {
          T* hv = m + h * hd;
          for (std::size_t i = 0; i < half; ++i) {
            const T a = hv[2 * i], b = hv[2 * i + 1];
            hv[2 * i] = a * cs[i] - b * sn[i];
            hv[2 * i + 1] = a * sn[i] + b * cs[i];
          }
        }
      }
    }
    c.probs.assign(prob_total, T(0));
    c.att.assign(n * d, T(0));
    for (std::size_t s = 0; s < ws.offset.size(); ++s) {
      const std::size_t o = ws.offset[s], len = ws.length[s];
      for (std::size_t h = 0; h < nh; ++h) {
        for (std::size_t t = 0; t < len; ++t) {
          T* pr = c.probs.data() + ws.prob_offset[s] + (h * len + t) * len;
          const T* qt = c.q.data() + (o + t) * d + h * hd;
          T mx = -std::numeric_limits<T>::infinity();
          for (std::size_t u = 0; u <= t; ++u) {
            pr[u] = kernels::Dot(qt, c.k.data() + (o + u) * d + h * hd, hd) *
                    scale;
            mx = std::max(mx, pr[u]);
          }
          T sum = T(0);
          for (std::size_t u = 0; u <= t; ++u) {
            pr[u] = std::exp(pr[u] - mx);
            sum += pr[u];
          }
          for (std::size_t u = 0; u <= t; ++u) pr[u] /= sum;
          T* at = c.att.data() + (o + t) * d + h * hd;
          for (std::size_t u = 0; u <= t; ++u) {
            const T* vu = c.v.data() + (o + u) * d + h * hd;
            for (std::size_t j = 0; j < hd; ++j) at[j] += pr[u] * vu[j];
          }
        }
      }
    }
    kernels::MatMul(n, d, d, c.att.data(), pt + lo.wo, branch.data(), false);
    apply_hooks(Site::kAttnOut, l, branch.data());
    c.h1.resize(n * d);
    for (std::size_t i = 0; i < n * d; ++i) c.h1[i] = c.x[i] + branch[i];
    c.inv2.resize(n);
    c.n2.resize(n * d);
    RmsForward(n, d, c.h1.data(), p + lo.mlp_norm, c.inv2.data(), c.n2.data());
    c.gate.resize(n * f);
    c.up.resize(n * f);
    c.act.resize(n * f);
    kernels::MatMul(n, f, d, c.n2.data(), pt + lo.w_gate, c.gate.data(), false);
    kernels::MatMul(n, f, d, c.n2.data(), pt + lo.w_in, c.up.data(), false);
    for (std::size_t i = 0; i < n * f; ++i) {
      c.act[i] = c.gate[i] * Sigmoid(c.gate[i]) * c.up[i];
    }
    kernels::MatMul(n, d, f, c.act.data(), pt + lo.w_out, branch.data(), false);
    apply_hooks(Site::kMlpOut, l, branch.data());
    for (std::size_t i = 0; i < n * d; ++i) x[i] = c.h1[i] + branch[i];
    apply_hooks(Site::kLayerOut, l, x.data());
  }
  ws.y = std::move(x);
  ws.invf.resize(n);
  ws.nf.resize(n * d);
  RmsForward(n, d, ws.y.data(), p + final_norm_, ws.invf.data(), ws.nf.data());
  ws.logits.resize(n * nv);
  kernels::MatMul(n, nv, d, ws.nf.data(), pt + unembedding_, ws.logits.data(),
                  false);
  ws.probs.resize(n * nv);
  for (std::size_t r = 0; r < n; ++r) {
    const T* lg = ws.logits.data() + r * nv;
    double* pr = ws.probs.data() + r * nv;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nv; ++j) mx = std::max(mx, double(lg[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < nv; ++j) {
      pr[j] = std::exp(double(lg[j]) - mx);
      sum += pr[j];
    }
    for (std::size_t j = 0; j < nv; ++j) pr[j] /= sum;
  }
}

template <typename T>
void Transformer<T>::RunBackward(
    Workspace& ws, std::vector<T>& dlogits, T* grad,
    std::span<const std::pair<SiteRef, std::size_t>> sites,
    std::vector<std::vector<double>>* site_outputs) const {
  const std::size_t d = config_.d_model;
  const std::size_t f = config_.d_ff;
  const std::size_t nv = config_.vocab_size;
  const std::size_t nl = config_.n_layers;
  const std::size_t nh = config_.n_heads;
  const std::size_t hd = config_.head_dim();
  const std::size_t half = hd / 2;
  const std::size_t n = ws.rows;
  const T* p = params_.data();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  std::size_t remaining = sites.size();
  if (site_outputs != nullptr) site_outputs->assign(sites.size(), {});
  // Records the gradient at (site, layer), then blocks flow through patched
  // rows. Returns true when every requested site has been reached and the
  // caller does not need parameter gradients.
  auto visit = [&](Site site, std::size_t layer, T* g) {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const SiteRef& s = sites[i].first;
      const std::size_t sl = s.site == Site::kEmbedding ? 0 : s.layer;
      if (s.site != site || sl != layer) continue;
      const std::size_t row = sites[i].second;
      (*site_outputs)[i].assign(g + row * d, g + (row + 1) * d);
      --remaining;
    }
    const auto& patched = ws.buckets[SiteIndex(site) * nl + layer].patched;
    for (std::size_t r = 0; r < n; ++r) {
      if (patched[r]) std::fill(g + r * d, g + (r + 1) * d, T(0));
    }
    return grad == nullptr && !sites.empty() && remaining == 0;
  };

  // Final norm and unembedding.
  std::vector<T> dnf(n * d), dx(n * d, T(0));
  kernels::MatMul(n, d, nv, dlogits.data(), p + unembedding_, dnf.data(),
                  false);
  if (grad != nullptr) {
    kernels::MatMulTransAAccumulate(n, d, nv, dlogits.data(), ws.nf.data(),
                                    grad + unembedding_);
  }
  RmsBackward(n, d, ws.y.data(), p + final_norm_, ws.invf.data(), dnf.data(),
              dx.data(), grad != nullptr ? grad + final_norm_ : nullptr);

  std::vector<T> dbranch(n * d), dact(n * f), dgate(n * f), dup(n * f),
      dn(n * d), datt(n * d), dq(n * d), dk(n * d), dv(n * d);
  for (std::size_t li = nl; li-- > 0;) {
    const LayerOffsets& lo = layers_[li];
    const auto& c = ws.layers[li];
    if (visit(Site::kLayerOut, li, dx.data())) return;
    // dx now holds d(h1) from the residual; branch gets a copy.
    dbranch = dx;
    if (visit(Site::kMlpOut, li, dbranch.data())) return;
    kernels::MatMul(n, f, d, dbranch.data(), p + lo.w_out, dact.data(), false);
    if (grad != nullptr) {
      kernels::MatMulTransAAccumulate(n, f, d, dbranch.data(), c.act.data(),
                                      grad + lo.w_out);
    }
    for (std::size_t i = 0; i < n * f; ++i) {
      const T sg = Sigmoid(c.gate[i]);
      const T silu = c.gate[i] * sg;
      dup[i] = dact[i] * silu;
      dgate[i] = dact[i] * c.up[i] * sg * (T(1) + c.gate[i] * (T(1) - sg));
    }
    kernels::MatMul(n, d, f, dgate.data(), p + lo.w_gate, dn.data(), false);
    kernels::MatMul(n, d, f, dup.data(), p + lo.w_in, dn.data(), true);
    if (grad != nullptr) {
      kernels::MatMulTransAAccumulate(n, d, f, dgate.data(), c.n2.data(),
                                      grad + lo.w_gate);
      kernels::MatMulTransAAccumulate(n, d, f, dup.data(), c.n2.data(),
                                      grad + lo.w_in);
    }
    RmsBackward(n, d, c.h1.data(), p + lo.mlp_norm, c.inv2.data(), dn.data(),
                dx.data(), grad != nullptr ? grad + lo.mlp_norm : nullptr);

    dbranch = dx;
    if (visit(Site::kAttnOut, li, dbranch.data())) return;
    kernels::MatMul(n, d, d, dbranch.data(), p + lo.wo, datt.data(), false);
    if (grad != nullptr) {
      kernels::MatMulTransAAccumulate(n, d, d, dbranch.data(), c.att.data(),
                                      grad + lo.wo);
    }
    std::fill(dq.begin(), dq.end(), T(0));
    std::fill(dk.begin(), dk.end(), T(0));
    std::fill(dv.begin(), dv.end(), T(0));
    std::vector<T> dp;
    for (std::size_t s = 0; s < ws.offset.size(); ++s) {
      const std::size_t o = ws.offset[s], len = ws.length[s];
      dp.resize(len);
      for (std::size_t h = 0; h < nh; ++h) {
        for (std::size_t t = 0; t < len; ++t) {
          const T* pr = c.probs.data() + ws.prob_offset[s] + (h * len + t) * len;
          const T* dat = datt.data() + (o + t) * d + h * hd;
          T dot = T(0);
          for (std::size_t u = 0; u <= t; ++u) {
            dp[u] = kernels::Dot(dat, c.v.data() + (o + u) * d + h * hd, hd);
            dot += pr[u] * dp[u];
          }
          const T* qt = c.q.data() + (o + t) * d + h * hd;
          T* dqt = dq.data() + (o + t) * d + h * hd;
          for (std::size_t u = 0; u <= t; ++u) {
            const T ds = pr[u] * (dp[u] - dot) * scale;
            const T* ku = c.k.data() + (o + u) * d + h * hd;
            T* dku = dk.data() + (o + u) * d + h * hd;
            T* dvu = dv.data() + (o + u) * d + h * hd;
            for (std::size_t j = 0; j < hd; ++j) {
              dqt[j] += ds * ku[j];
              dku[j] += ds * qt[j];
              dvu[j] += pr[u] * dat[j];
            }
          }
        }
      }
    }
    for (std::size_t r = 0; r < n; ++r) {
      const T* cs = rope_cos_.data() + ws.position[r] * half;
      const T* sn = rope_sin_.data() + ws.position[r] * half;
      for (T* m : {dq.data() + r * d, dk.data() + r * d}) {
        for (std::size_t h = 0; h < nh; ++h) {
          T* hv = m + h * hd;
          for (std::size_t i = 0; i < half; ++i) {
            const T a = hv[2 * i], b = hv[2 * i + 1];
            hv[2 * i] = a * cs[i] + b * sn[i];
            hv[2 * i + 1] = b * cs[i] - a * sn[i];
          }
        }
      }
    }
    kernels::MatMul(n, d, d, dq.data(), p + lo.wq, dn.data(), false);
    kernels::MatMul(n, d, d, dk.data(), p + lo.wk, dn.data(), true);
    kernels::MatMul(n, d, d, dv.data(), p + lo.wv, dn.data(), true);
    if (grad != nullptr) {
      kernels::MatMulTransAAccumulate(n, d, d, dq.data(), c.n1.data(),
                                      grad + lo.wq);
      kernels::MatMulTransAAccumulate(n, d, d, dk.data(), c.n1.data(),
                                      grad + lo.wk);
      kernels::MatMulTransAAccumulate(n, d, d, dv.data(), c.n1.data(),
                                      grad + lo.wv);
    }
    RmsBackward(n, d, c.x.data(), p + lo.attn_norm, c.inv1.data(), dn.data(),
                dx.data(), grad != nullptr ? grad + lo.attn_norm : nullptr);
  }
  if (visit(Site::kEmbedding, 0, dx.data())) return;
  if (grad != nullptr) {
    for (std::size_t r = 0; r < n; ++r) {
      T* ge = grad + embedding_ + static_cast<std::size_t>(ws.tokens[r]) * d;
      const T* g = dx.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) ge[j] += g[j];
    }
  }
}

namespace {

// Loss of one scored row plus its logit gradient (accumulated into dl).
template <typename T>
double RowLoss(const double* pr, std::size_t nv, const LossSpec& loss, T* dl) {
  switch (loss.kind) {
    case LossSpec::Kind::kNegLogProb: {
      if (loss.target < 0 || static_cast<std::size_t>(loss.target) >= nv) {
        throw Error(ErrorCode::kBadToken, "loss target out of vocabulary");
      }
      for (std::size_t j = 0; j < nv; ++j) {
        dl[j] += static_cast<T>(loss.weight * pr[j]);
      }
      const std::size_t tgt = static_cast<std::size_t>(loss.target);
      dl[tgt] -= static_cast<T>(loss.weight);
      return -loss.weight * std::log(pr[tgt]);
    }
    case LossSpec::Kind::kKlToReference: {
      if (loss.reference.size() != nv) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "KL reference must cover the vocabulary");
      }
      std::vector<double> term(nv, 0.0);
      double kl = 0.0;
      for (std::size_t j = 0; j < nv; ++j) {
        if (pr[j] > 0.0) {
          term[j] = std::log(pr[j]) - std::log(loss.reference[j]);
          kl += pr[j] * term[j];
        }
      }
      for (std::size_t j = 0; j < nv; ++j) {
        dl[j] += static_cast<T>(loss.weight * pr[j] * (term[j] - kl));
      }
      return loss.weight * kl;
    }
    default:
      return 0.0;
  }
}

}  // namespace

template <typename T>
double Transformer<T>::FillLossGradient(const Workspace& ws, std::size_t seq,
                                        const LossSpec& loss,
                                        std::vector<T>& dlogits) const {
  const std::size_t nv = config_.vocab_size;
  const std::size_t o = ws.offset[seq], len = ws.length[seq];
  if (loss.kind == LossSpec::Kind::kConstant) return 0.0;
  if (loss.kind == LossSpec::Kind::kSequenceCrossEntropy) {
    if (len < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sequence cross-entropy needs at least two tokens");
    }
    const double w = loss.weight / static_cast<double>(len - 1);
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < len; ++t) {
      const double* pr = ws.probs.data() + (o + t) * nv;
      T* dl = dlogits.data() + (o + t) * nv;
      for (std::size_t j = 0; j < nv; ++j) dl[j] += static_cast<T>(w * pr[j]);
      const std::size_t tgt = static_cast<std::size_t>(ws.tokens[o + t + 1]);
      dl[tgt] -= static_cast<T>(w);
      total -= std::log(pr[tgt]);
    }
    return w * total;
  }
  if (loss.position >= len) {
    throw Error(ErrorCode::kInvalidArgument,
                "loss position " + std::to_string(loss.position) +
                    " out of range");
  }
  return RowLoss(ws.probs.data() + (o + loss.position) * nv, nv, loss,
                 dlogits.data() + (o + loss.position) * nv);
}

template <typename T>
ForwardOutput Transformer<T>::Forward(std::span<const TokenId> tokens,
                                      std::span<const HookSpec> hooks) const {
  const SequenceRequest req{tokens, hooks};
  return std::move(ForwardBatch(std::span(&req, 1)).front());
}

template <typename T>
std::vector<ForwardOutput> Transformer<T>::ForwardBatch(
    std::span<const SequenceRequest> requests) const {
  Workspace ws;
  RunForward(requests, ws);
  const std::size_t nv = config_.vocab_size;
  std::vector<ForwardOutput> out(requests.size());
  for (std::size_t q = 0; q < requests.size(); ++q) {
    out[q].captures = std::move(ws.captures[q]);
    for (std::size_t t = 0; t < ws.length[q]; ++t) {
      const double* pr = ws.probs.data() + (ws.offset[q] + t) * nv;
      out[q].distributions.push_back({std::vector<double>(pr, pr + nv), t + 1});
    }
  }
  return out;
}

template <typename T>
SiteGradient Transformer<T>::GradWrtActivation(
    std::span<const TokenId> tokens, const SiteRef& site, const LossSpec& loss,
    std::span<const HookSpec> hooks) const {
  const SequenceRequest req{tokens, hooks};
  return std::move(GradWrtActivationBatch(std::span(&req, 1),
                                          std::span(&site, 1),
                                          std::span(&loss, 1))
                       .front());
}

template <typename T>
std::vector<SiteGradient> Transformer<T>::GradWrtActivationBatch(
    std::span<const SequenceRequest> requests, std::span<const SiteRef> sites,
    std::span<const LossSpec> losses) const {
  if (sites.size() != requests.size() || losses.size() != requests.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "one site and one loss per request required");
  }
  for (std::size_t q = 0; q < requests.size(); ++q) {
    ValidateSite(sites[q], config_.n_layers, requests[q].tokens.size());
  }
  Workspace ws;
  RunForward(requests, ws);
  std::vector<T> dlogits(ws.rows * config_.vocab_size, T(0));
  std::vector<SiteGradient> out(requests.size());
  std::vector<std::pair<SiteRef, std::size_t>> rows;
  for (std::size_t q = 0; q < requests.size(); ++q) {
    out[q].loss = FillLossGradient(ws, q, losses[q], dlogits);
    rows.emplace_back(sites[q], ws.offset[q] + sites[q].token);
  }
  std::vector<std::vector<double>> grads;
  RunBackward(ws, dlogits, nullptr, rows, &grads);
  for (std::size_t q = 0; q < requests.size(); ++q) {
    out[q].gradient = std::move(grads[q]);
  }
  return out;
}

template <typename T>
double Transformer<T>::Loss(std::span<const TokenId> tokens,
                            const LossSpec& loss,
                            std::span<const HookSpec> hooks) const {
  const SequenceRequest req{tokens, hooks};
  Workspace ws;
  RunForward(std::span(&req, 1), ws);
  std::vector<T> dlogits(ws.rows * config_.vocab_size, T(0));
  return FillLossGradient(ws, 0, loss, dlogits);
}

template <typename T>
double Transformer<T>::LossAndParameterGradient(
    std::span<const std::vector<TokenId>> batch, std::vector<T>* grad) const {
  std::vector<SequenceRequest> requests;
  std::size_t predicted = 0;
  for (const auto& seq : batch) {
    if (seq.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "training sequences need at least two tokens");
    }
    requests.push_back({seq, {}});
    predicted += seq.size() - 1;
  }
  if (requests.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty training batch");
  }
  Workspace ws;
  RunForward(requests, ws);
  std::vector<T> dlogits(ws.rows * config_.vocab_size, T(0));
  double total = 0.0;
  for (std::size_t q = 0; q < requests.size(); ++q) {
    LossSpec spec = LossSpec::SequenceCrossEntropy();
    spec.weight = static_cast<double>(batch[q].size() - 1) /
                  static_cast<double>(predicted);
    total += FillLossGradient(ws, q, spec, dlogits);
  }
  if (grad != nullptr) {
    grad->assign(params_.size(), T(0));
    RunBackward(ws, dlogits, grad->data(), {}, nullptr);
  }
  return total;
}

template <typename T>
struct Transformer<T>::MlpTail::State {
  const Transformer<T>* model = nullptr;  // must outlive the tail
  std::size_t layer = 0;
  std::vector<std::size_t> length;
  std::vector<std::size_t> cache_offset;  // rows into the k/v caches
  std::vector<T> h1_last;                 // S x d, residual before the MLP add
  std::vector<std::vector<double>> clean;
  // Per layer above `layer`: roped keys and values of positions 0..n-2.
  std::vector<std::vector<T>> k_cache, v_cache;
};

template <typename T>
Transformer<T>::MlpTail::MlpTail(std::unique_ptr<State> state)
    : state_(std::move(state)) {}

template <typename T>
Transformer<T>::MlpTail::MlpTail(MlpTail&&) noexcept = default;

template <typename T>
Transformer<T>::MlpTail::~MlpTail() = default;

template <typename T>
std::size_t Transformer<T>::MlpTail::size() const {
  return state_->length.size();
}

template <typename T>
const std::vector<double>& Transformer<T>::MlpTail::clean_value(
    std::size_t seq) const {
  return state_->clean.at(seq);
}

template <typename T>
typename Transformer<T>::MlpTail Transformer<T>::MakeMlpTail(
    std::span<const SequenceRequest> requests, std::size_t layer) const {
  if (layer >= config_.n_layers) {
    throw Error(ErrorCode::kInvalidArgument, "MLP tail layer out of range");
  }
  if (requests.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "MLP tail needs a sequence");
  }
  const std::size_t d = config_.d_model;
  std::vector<std::vector<HookSpec>> hooks(requests.size());
  std::vector<SequenceRequest> captured;
  for (std::size_t q = 0; q < requests.size(); ++q) {
    if (!requests[q].hooks.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "MLP tail requests must not carry hooks");
    }
    if (requests[q].tokens.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "empty MLP tail sequence");
    }
    hooks[q].push_back(HookSpec::Capture(Site::kMlpOut, layer,
                                         requests[q].tokens.size() - 1));
    captured.push_back({requests[q].tokens, hooks[q]});
  }
  Workspace ws;
  RunForward(captured, ws);

  auto st = std::make_unique<typename MlpTail::State>();
  st->model = this;
  st->layer = layer;
  const std::size_t above = config_.n_layers - layer - 1;
  st->k_cache.resize(above);
  st->v_cache.resize(above);
  std::size_t cache_rows = 0;
  for (std::size_t q = 0; q < requests.size(); ++q) {
    const std::size_t len = ws.length[q];
    const std::size_t last = ws.offset[q] + len - 1;
    st->length.push_back(len);
    st->cache_offset.push_back(cache_rows);
    cache_rows += len - 1;
    const auto& h1 = ws.layers[layer].h1;
    st->h1_last.insert(st->h1_last.end(), h1.begin() + last * d,
                       h1.begin() + (last + 1) * d);
    st->clean.push_back(ws.captures[q][0]);
    for (std::size_t a = 0; a < above; ++a) {
      const auto& c = ws.layers[layer + 1 + a];
      const std::size_t o = ws.offset[q] * d;
      st->k_cache[a].insert(st->k_cache[a].end(), c.k.begin() + o,
                            c.k.begin() + o + (len - 1) * d);
      st->v_cache[a].insert(st->v_cache[a].end(), c.v.begin() + o,
                            c.v.begin() + o + (len - 1) * d);
    }
  }
  return MlpTail(std::move(st));
}

template <typename T>
typename Transformer<T>::MlpTail::Result Transformer<T>::MlpTail::Evaluate(
    const std::vector<double>& z, std::span<const LossSpec> losses,
    bool want_gradient) const {
  const State& st = *state_;
  const Transformer<T>& m = *st.model;
  const ModelConfig& cfg = m.config_;
  const std::size_t d = cfg.d_model;
  const std::size_t f = cfg.d_ff;
  const std::size_t nv = cfg.vocab_size;
  const std::size_t nh = cfg.n_heads;
  const std::size_t hd = cfg.head_dim();
  const std::size_t half = hd / 2;
  const std::size_t n = st.length.size();
  if (z.size() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "tail value must be d_model");
  }
  if (losses.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "one loss per tail sequence");
  }
  for (std::size_t s = 0; s < n; ++s) {
    const LossSpec& ls = losses[s];
    if (ls.kind == LossSpec::Kind::kSequenceCrossEntropy) {
      throw Error(ErrorCode::kInvalidArgument,
                  "tail losses must be scored at one position");
    }
    if (ls.kind != LossSpec::Kind::kConstant &&
        ls.position + 1 != st.length[s]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "tail losses must be scored at the last position");
    }
  }
  const T* p = m.params_.data();
  const T* pt = m.transposed_.data();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const std::size_t above = cfg.n_layers - st.layer - 1;

  std::vector<std::size_t> prob_offset(n);
  std::size_t prob_total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    prob_offset[s] = prob_total;
    prob_total += nh * st.length[s];
  }

  std::vector<T> x(n * d);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < d; ++j) {
      x[s * d + j] = st.h1_last[s * d + j] + static_cast<T>(z[j]);
    }
  }
  std::vector<typename Workspace::Layer> layers(above);
  std::vector<T> branch(n * d);
  auto key = [&](std::size_t a, std::size_t s, std::size_t u,
                 const std::vector<T>& fresh,
                 const std::vector<std::vector<T>>& cache) -> const T* {
    if (u + 1 == st.length[s]) return fresh.data() + s * d;
    return cache[a].data() + (st.cache_offset[s] + u) * d;
  };
  for (std::size_t a = 0; a < above; ++a) {
    const LayerOffsets& lo = m.layers_[st.layer + 1 + a];
    auto& c = layers[a];
    c.x = x;
    c.inv1.resize(n);
    c.n1.resize(n * d);
    RmsForward(n, d, c.x.data(), p + lo.attn_norm, c.inv1.data(), c.n1.data());
    c.q.resize(n * d);
    c.k.resize(n * d);
    c.v.resize(n * d);
    kernels::MatMul(n, d, d, c.n1.data(), pt + lo.wq, c.q.data(), false);
    kernels::MatMul(n, d, d, c.n1.data(), pt + lo.wk, c.k.data(), false);
    kernels::MatMul(n, d, d, c.n1.data(), pt + lo.wv, c.v.data(), false);
    for (std::size_t s = 0; s < n; ++s) {
      const T* cs = m.rope_cos_.data() + (st.length[s] - 1) * half;
      const T* sn = m.rope_sin_.data() + (st.length[s] - 1) * half;
      for (T* mat : {c.q.data() + s * d, c.k.data() + s * d}) {
        for (std::size_t h = 0; h < nh; ++h) {
          T* hv = mat + h * hd;
          for (std::size_t i = 0; i < half; ++i) {
            const T va = hv[2 * i], vb = hv[2 * i + 1];
            hv[2 * i] = va * cs[i] - vb * sn[i];
            hv[2 * i + 1] = va * sn[i] + vb * cs[i];
          }
        }
      }
    }
    c.probs.assign(prob_total, T(0));
    c.att.assign(n * d, T(0));
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t len = st.length[s];
      for (std::size_t h = 0; h < nh; ++h) {
        T* pr = c.probs.data() + prob_offset[s] + h * len;
        const T* qt = c.q.data() + s * d + h * hd;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t u = 0; u < len; ++u) {
          pr[u] = kernels::Dot(qt, key(a, s, u, c.k, st.k_cache) + h * hd, hd) *
                  scale;
          mx = std::max(mx, pr[u]);
        }
        T sum = T(0);
        for (std::size_t u = 0; u < len; ++u) {
          pr[u] = std::exp(pr[u] - mx);
          sum += pr[u];
        }
        for (std::size_t u = 0; u < len; ++u) pr[u] /= sum;
        T* at = c.att.data() + s * d + h * hd;
        for (std::size_t u = 0; u < len; ++u) {
          const T* vu = key(a, s, u, c.v, st.v_cache) + h * hd;
          for (std::size_t j = 0; j < hd; ++j) at[j] += pr[u] * vu[j];
        }
      }
    }
    kernels::MatMul(n, d, d, c.att.data(), pt + lo.wo, branch.data(), false);
    c.h1.resize(n * d);
    for (std::size_t i = 0; i < n * d; ++i) c.h1[i] = c.x[i] + branch[i];
    c.inv2.resize(n);
    c.n2.resize(n * d);
    RmsForward(n, d, c.h1.data(), p + lo.mlp_norm, c.inv2.data(), c.n2.data());
    c.gate.resize(n * f);
    c.up.resize(n * f);
    c.act.resize(n * f);
    kernels::MatMul(n, f, d, c.n2.data(), pt + lo.w_gate, c.gate.data(), false);
    kernels::MatMul(n, f, d, c.n2.data(), pt + lo.w_in, c.up.data(), false);
    for (std::size_t i = 0; i < n * f; ++i) {
      c.act[i] = c.gate[i] * Sigmoid(c.gate[i]) * c.up[i];
    }
    kernels::MatMul(n, d, f, c.act.data(), pt + lo.w_out, branch.data(), false);
    for (std::size_t i = 0; i < n * d; ++i) x[i] = c.h1[i] + branch[i];
  }
  std::vector<T> invf(n), nf(n * d), logits(n * nv);
  RmsForward(n, d, x.data(), p + m.final_norm_, invf.data(), nf.data());
  kernels::MatMul(n, nv, d, nf.data(), pt + m.unembedding_, logits.data(),
                  false);

  Result res;
  res.last_probabilities.resize(n);
  res.losses.resize(n);
  std::vector<T> dlogits(n * nv, T(0));
  for (std::size_t s = 0; s < n; ++s) {
    const T* lg = logits.data() + s * nv;
    std::vector<double>& pr = res.last_probabilities[s];
    pr.resize(nv);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nv; ++j) mx = std::max(mx, double(lg[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < nv; ++j) {
      pr[j] = std::exp(double(lg[j]) - mx);
      sum += pr[j];
    }
    for (std::size_t j = 0; j < nv; ++j) pr[j] /= sum;
    res.losses[s] = RowLoss(pr.data(), nv, losses[s], dlogits.data() + s * nv);
    res.total_loss += res.losses[s];
  }
  if (!want_gradient) return res;

  std::vector<T> dnf(n * d), dx(n * d, T(0));
  kernels::MatMul(n, d, nv, dlogits.data(), p + m.unembedding_, dnf.data(),
                  false);
  RmsBackward(n, d, x.data(), p + m.final_norm_, invf.data(), dnf.data(),
              dx.data(), static_cast<T*>(nullptr));
  std::vector<T> dbranch(n * d), dact(n * f), dgate(n * f), dup(n * f),
      dn(n * d), datt(n * d), dq(n * d), dk(n * d), dv(n * d), dp;
  for (std::size_t a = above; a-- > 0;) {
    const LayerOffsets& lo = m.layers_[st.layer + 1 + a];
    const auto& c = layers[a];
    dbranch = dx;
    kernels::MatMul(n, f, d, dbranch.data(), p + lo.w_out, dact.data(), false);
    for (std::size_t i = 0; i < n * f; ++i) {
      const T sg = Sigmoid(c.gate[i]);
      const T silu = c.gate[i] * sg;
      dup[i] = dact[i] * silu;
      dgate[i] = dact[i] * c.up[i] * sg * (T(1) + c.gate[i] * (T(1) - sg));
    }
    kernels::MatMul(n, d, f, dgate.data(), p + lo.w_gate, dn.data(), false);
    kernels::MatMul(n, d, f, dup.data(), p + lo.w_in, dn.data(), true);
    RmsBackward(n, d, c.h1.data(), p + lo.mlp_norm, c.inv2.data(), dn.data(),
                dx.data(), static_cast<T*>(nullptr));

    dbranch = dx;
    kernels::MatMul(n, d, d, dbranch.data(), p + lo.wo, datt.data(), false);
    std::fill(dq.begin(), dq.end(), T(0));
    std::fill(dk.begin(), dk.end(), T(0));
    std::fill(dv.begin(), dv.end(), T(0));
    // Cached keys and values do not depend on z; only the fresh row's
    // query, key and value carry gradient.
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t len = st.length[s];
      dp.resize(len);
      for (std::size_t h = 0; h < nh; ++h) {
        const T* pr = c.probs.data() + prob_offset[s] + h * len;
        const T* dat = datt.data() + s * d + h * hd;
        T dot = T(0);
        for (std::size_t u = 0; u < len; ++u) {
          dp[u] = kernels::Dot(dat, key(a, s, u, c.v, st.v_cache) + h * hd, hd);
          dot += pr[u] * dp[u];
        }
        const T* qt = c.q.data() + s * d + h * hd;
        T* dqt = dq.data() + s * d + h * hd;
        for (std::size_t u = 0; u < len; ++u) {
          const T ds = pr[u] * (dp[u] - dot) * scale;
          const T* ku = key(a, s, u, c.k, st.k_cache) + h * hd;
          for (std::size_t j = 0; j < hd; ++j) dqt[j] += ds * ku[j];
          if (u + 1 == len) {
            T* dku = dk.data() + s * d + h * hd;
            T* dvu = dv.data() + s * d + h * hd;
            for (std::size_t j = 0; j < hd; ++j) {
              dku[j] += ds * qt[j];
              dvu[j] += pr[u] * dat[j];
            }
          }
        }
      }
    }
    for (std::size_t s = 0; s < n; ++s) {
      const T* cs = m.rope_cos_.data() + (st.length[s] - 1) * half;
      const T* sn = m.rope_sin_.data() + (st.length[s] - 1) * half;
      for (T* mat : {dq.data() + s * d, dk.data() + s * d}) {
        for (std::size_t h = 0; h < nh; ++h) {
          T* hv = mat + h * hd;
          for (std::size_t i = 0; i < half; ++i) {
            const T va = hv[2 * i], vb = hv[2 * i + 1];
            hv[2 * i] = va * cs[i] + vb * sn[i];
            hv[2 * i + 1] = vb * cs[i] - va * sn[i];
          }
        }
      }
    }
    kernels::MatMul(n, d, d, dq.data(), p + lo.wq, dn.data(), false);
    kernels::MatMul(n, d, d, dk.data(), p + lo.wk, dn.data(), true);
    kernels::MatMul(n, d, d, dv.data(), p + lo.wv, dn.data(), true);
    RmsBackward(n, d, c.x.data(), p + lo.attn_norm, c.inv1.data(), dn.data(),
                dx.data(), static_cast<T*>(nullptr));
  }
  res.gradient.assign(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < d; ++j) res.gradient[j] += dx[s * d + j];
  }
  return res;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace dama::toylm
