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

#include "dama/tracer/tracer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "dama/common/error.h"
#include "json.hpp"

namespace dama::tracer {
namespace {

using toylm::HookSpec;
using toylm::Site;
using toylm::SiteRef;

constexpr std::array<const char*, kGroupCount> kGroupLabels = {
    "subject_first", "subject_middle", "subject_last",
    "first_subsequent", "further", "last"};

std::uint64_t Mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Depends on the prompt's content, never on its position in a batch, so grids
// do not change when prompts are reordered.
std::uint64_t PromptSeed(std::uint64_t seed, std::span<const TokenId> tokens,
                         std::size_t sample) {
  std::uint64_t h = Mix(seed + 0x9E3779B97F4A7C15ull);
  for (TokenId t : tokens) h = Mix(h ^ static_cast<std::uint64_t>(t));
  return Mix(h ^ (static_cast<std::uint64_t>(sample) + 1));
}

// Box-Muller on 53-bit uniforms; fixed across standard libraries.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    while (u == 0.0) u = Uniform();
    const double v = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(kTwoPi * v);
    has_spare_ = true;
    return r * std::cos(kTwoPi * v);
  }

 private:
  double Uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void CheckSpan(std::size_t length, SubjectSpan s) {
  if (s.begin >= s.end || s.end >= length) {
    throw Error(ErrorCode::kSpanOutOfRange,
                "subject span [" + std::to_string(s.begin) + ", " +
                    std::to_string(s.end) + ") invalid for " +
                    std::to_string(length) + " tokens");
  }
}

bool SameFit(const std::optional<biaseval::BiasRegressionFit>& a,
             const std::optional<biaseval::BiasRegressionFit>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->a_s == b->a_s && a->a_f == b->a_f && a->b0 == b->b0 &&
         a->r2 == b->r2 && a->n == b->n;
}

}  // namespace

void NoiseConfig::Validate() const {
  if (!(multiplier > 0.0) || !(base_sigma >= 0.0) || !std::isfinite(sigma())) {
    throw Error(ErrorCode::kInvalidArgument,
                "noise needs multiplier > 0 and base_sigma >= 0");
  }
  if (samples == 0) {
    throw Error(ErrorCode::kInvalidArgument, "noise samples must be >= 1");
  }
}

NoiseConfig CalibrateNoise(const toylm::ModelCheckpoint& ckpt,
                           const std::vector<datagen::ProfessionEntry>& lexicon,
                           std::vector<std::string>* warnings) {
  if (lexicon.empty()) {
    throw Error(ErrorCode::kEmptyLexicon, "noise calibration needs professions");
  }
  const datagen::Vocabulary vocab(ckpt.vocab);
  const auto& emb = ckpt.at(toylm::names::kEmbedding).values;
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& e : lexicon) {
    for (TokenId t : vocab.Encode(e.word)) {
      for (float v : emb.row(static_cast<std::size_t>(t))) {
        sum += v;
        ++n;
      }
    }
  }
  const double mean = sum / static_cast<double>(n);
  for (const auto& e : lexicon) {
    for (TokenId t : vocab.Encode(e.word)) {
      for (float v : emb.row(static_cast<std::size_t>(t))) {
        sq += (v - mean) * (v - mean);
      }
    }
  }
  NoiseConfig cfg;
  cfg.base_sigma = std::sqrt(sq / static_cast<double>(n));
  if (cfg.base_sigma == 0.0 && warnings) {
    warnings->push_back("profession embeddings have zero spread; noise is off");
  }
  return cfg;
}

std::string_view ComponentName(Component c) {
  switch (c) {
    case Component::kMlp: return "mlp";
    case Component::kAttn: return "attn";
    case Component::kLayer: return "layer";
  }
  return "?";
}

Component ParseComponent(std::string_view name) {
  for (Component c : {Component::kMlp, Component::kAttn, Component::kLayer}) {
    if (ComponentName(c) == name) return c;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "component must be mlp, attn or layer, got '" + std::string(name) + "'");
}

Site SiteOf(Component c) {
  switch (c) {
    case Component::kMlp: return Site::kMlpOut;
    case Component::kAttn: return Site::kAttnOut;
    case Component::kLayer: return Site::kLayerOut;
  }
  return Site::kLayerOut;
}

std::string_view GroupLabel(TokenGroup g) {
  return kGroupLabels[static_cast<std::size_t>(g)];
}

TokenGrouping TokenGrouping::For(std::size_t length, SubjectSpan s) {
  CheckSpan(length, s);
  TokenGrouping g;
  g.assignment.assign(length, TokenGroup::kFurther);
  for (std::size_t i = s.begin; i < s.end; ++i) {
    g.assignment[i] = TokenGroup::kSubjectMiddle;
  }
  if (s.end - s.begin >= 2) g.assignment[s.begin] = TokenGroup::kSubjectFirst;
  g.assignment[s.end - 1] = TokenGroup::kSubjectLast;
  g.assignment[s.end] = TokenGroup::kFirstSubsequent;
  g.assignment[length - 1] = TokenGroup::kLast;
  return g;
}

std::vector<TracePrompt> MakeTracePrompts(
    const datagen::Vocabulary& vocab,
    const std::vector<datagen::ProfessionEntry>& professions,
    const std::vector<datagen::PromptTemplate>& templates) {
  std::vector<TracePrompt> out;
  for (const auto& tpl : templates) {
    for (const auto& e : professions) {
      const auto p = datagen::EncodePrompt(vocab, tpl, e.word);
      out.push_back({p.tokens, {p.subject_begin, p.subject_end}, e, tpl.id});
    }
  }
  return out;
}

bool TraceGrid::operator==(const TraceGrid& o) const {
  if (component != o.component || n_layers != o.n_layers ||
      prompts.size() != o.prompts.size() || scores != o.scores ||
      fits.size() != o.fits.size()) {
    return false;
  }
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto &a = prompts[i], &b = o.prompts[i];
    if (a.profession != b.profession || a.template_id != b.template_id ||
        a.x_s != b.x_s || a.x_f != b.x_f || a.clean_y != b.clean_y ||
        a.corrupted_y != b.corrupted_y) {
      return false;
    }
  }
  for (std::size_t l = 0; l < fits.size(); ++l) {
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      if (!SameFit(fits[l][g], o.fits[l][g])) return false;
    }
  }
  return true;
}

CausalTracer::CausalTracer(const toylm::ModelCheckpoint& ckpt) : model_(ckpt) {
  const datagen::Vocabulary vocab(ckpt.vocab);
  he_ = vocab.Id(datagen::kHe);
  she_ = vocab.Id(datagen::kShe);
  const auto& emb = ckpt.at(toylm::names::kEmbedding).values;
  embedding_.resize(emb.rows());
  for (std::size_t t = 0; t < emb.rows(); ++t) {
    embedding_[t].assign(emb.row(t).begin(), emb.row(t).end());
  }
}

double CausalTracer::Score(const toylm::NextTokenDistribution& d) const {
  return d.probabilities[static_cast<std::size_t>(he_)] -
         d.probabilities[static_cast<std::size_t>(she_)];
}

std::vector<HookSpec> CausalTracer::NoiseHooks(std::span<const TokenId> tokens,
                                               SubjectSpan subject,
                                               const NoiseConfig& noise,
                                               std::size_t sample) const {
  noise.Validate();
  CheckSpan(tokens.size(), subject);
  Gaussian gauss(PromptSeed(noise.seed, tokens, sample));
  const double sigma = noise.sigma();
  std::vector<HookSpec> hooks;
  for (std::size_t i = subject.begin; i < subject.end; ++i) {
    std::vector<double> v = embedding_.at(static_cast<std::size_t>(tokens[i]));
    for (double& x : v) x += sigma * gauss();
    hooks.push_back(HookSpec::Patch(Site::kEmbedding, 0, i, std::move(v)));
  }
  return hooks;
}

toylm::NextTokenDistribution CausalTracer::Clean(
    std::span<const TokenId> tokens) const {
  return model_.Forward(tokens).distributions.back();
}

toylm::NextTokenDistribution CausalTracer::Corrupted(
    std::span<const TokenId> tokens, SubjectSpan subject,
    const NoiseConfig& noise, std::size_t sample) const {
  const auto hooks = NoiseHooks(tokens, subject, noise, sample);
  return model_.Forward(tokens, hooks).distributions.back();
}

double CausalTracer::Restored(std::span<const TokenId> tokens,
                              SubjectSpan subject, const NoiseConfig& noise,
                              std::span<const SiteRef> sites) const {
  std::vector<HookSpec> captures;
  for (const SiteRef& s : sites) {
    captures.push_back(HookSpec::Capture(s.site, s.layer, s.token));
  }
  const auto clean = model_.Forward(tokens, captures).captures;
  double total = 0.0;
  for (std::size_t k = 0; k < noise.samples; ++k) {
    // Restorations come after the noise so an embedding restore wins.
    auto hooks = NoiseHooks(tokens, subject, noise, k);
    for (std::size_t i = 0; i < sites.size(); ++i) {
      hooks.push_back(HookSpec::Patch(sites[i].site, sites[i].layer,
                                      sites[i].token, clean[i]));
    }
    total += Score(model_.Forward(tokens, hooks).distributions.back());
  }
  return total / static_cast<double>(noise.samples);
}

std::vector<SiteRef> AllSites(Component component, std::size_t n_layers,
                              std::size_t length) {
  std::vector<SiteRef> out;
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (std::size_t t = 0; t < length; ++t) {
      if (component == Component::kLayer) {
        out.push_back({Site::kLayerOut, l, t});
      } else {
        out.push_back({Site::kAttnOut, l, t});
        out.push_back({Site::kMlpOut, l, t});
      }
    }
  }
  return out;
}

TraceGrid CausalTracer::BuildGrid(std::span<const TracePrompt> prompts,
                                  const NoiseConfig& noise,
                                  Component component) const {
  noise.Validate();
  std::vector<const TracePrompt*> order;
  for (const auto& p : prompts) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const TracePrompt* a, const TracePrompt* b) {
    if (a->tokens != b->tokens) return a->tokens < b->tokens;
    return a->profession.word < b->profession.word;
  });
  {
    std::vector<double> xs, xf, zero;
    for (const auto* p : order) {
      xs.push_back(p->profession.x_s);
      xf.push_back(p->profession.x_f);
      zero.push_back(0.0);
    }
    biaseval::FitBiasRegression(xs, xf, zero);  // design check
  }

  const std::size_t nl = n_layers();
  const Site site = SiteOf(component);
  TraceGrid grid;
  grid.component = component;
  grid.n_layers = nl;
  grid.scores.resize(nl);
  grid.fits.resize(nl);
  // present[g]: whether group g has positions in every prompt.
  std::array<bool, kGroupCount> present;
  present.fill(true);

  for (const TracePrompt* p : order) {
    const std::size_t len = p->tokens.size();
    const TokenGrouping grouping = TokenGrouping::For(len, p->subject);
    std::vector<HookSpec> captures;
    for (std::size_t l = 0; l < nl; ++l) {
      for (std::size_t t = 0; t < len; ++t) captures.push_back(HookSpec::Capture(site, l, t));
    }
    const auto clean_out = model_.Forward(p->tokens, captures);

    // restored[l * len + t], averaged over noise samples.
    std::vector<double> restored(nl * len, 0.0);
    double corrupted = 0.0;
    for (std::size_t k = 0; k < noise.samples; ++k) {
      const auto base = NoiseHooks(p->tokens, p->subject, noise, k);
      std::vector<std::vector<HookSpec>> hooks(nl * len + 1, base);
      for (std::size_t i = 0; i < nl * len; ++i) {
        hooks[i].push_back(HookSpec::Patch(site, i / len, i % len,
                                           clean_out.captures[i]));
      }
      std::vector<toylm::SequenceRequest> reqs;
      for (const auto& h : hooks) reqs.push_back({p->tokens, h});
      const auto outs = model_.ForwardBatch(reqs);
      for (std::size_t i = 0; i < nl * len; ++i) {
        restored[i] += Score(outs[i].distributions.back());
      }
      corrupted += Score(outs.back().distributions.back());
    }
    const double ns = static_cast<double>(noise.samples);
    for (double& v : restored) v /= ns;

    grid.prompts.push_back({p->profession.word, p->template_id, p->profession.x_s,
                            p->profession.x_f,
                            Score(clean_out.distributions.back()), corrupted / ns});
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      std::size_t count = 0;
      for (TokenGroup a : grouping.assignment) count += static_cast<std::size_t>(a) == g;
      if (count == 0) present[g] = false;
      for (std::size_t l = 0; l < nl; ++l) {
        double sum = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
          if (static_cast<std::size_t>(grouping.assignment[t]) == g) {
            sum += restored[l * len + t];
          }
        }
        grid.scores[l][g].push_back(count ? sum / static_cast<double>(count) : 0.0);
      }
    }
  }

  std::vector<double> xs, xf;
  for (const auto& p : grid.prompts) {
    xs.push_back(p.x_s);
    xf.push_back(p.x_f);
  }
  for (std::size_t l = 0; l < nl; ++l) {
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      if (!present[g]) {
        grid.scores[l][g].clear();
        continue;
      }
      grid.fits[l][g] = biaseval::FitBiasRegression(xs, xf, grid.scores[l][g]);
    }
  }
  return grid;
}

std::string GridToJson(const TraceGrid& grid) {
  nlohmann::ordered_json j;
  j["component"] = ComponentName(grid.component);
  j["n_layers"] = grid.n_layers;
  j["groups"] = kGroupLabels;
  auto& prompts = j["prompts"] = nlohmann::ordered_json::array();
  for (const auto& p : grid.prompts) {
    prompts.push_back({{"profession", p.profession},
                       {"template", p.template_id},
                       {"x_s", p.x_s},
                       {"x_f", p.x_f},
                       {"clean_y", p.clean_y},
                       {"corrupted_y", p.corrupted_y}});
  }
  auto& cells = j["cells"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < grid.n_layers; ++l) {
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      nlohmann::ordered_json c = {{"layer", l}, {"group", kGroupLabels[g]}};
      if (const auto& f = grid.fits[l][g]) {
        c["a_s"] = f->a_s;
        c["a_f"] = f->a_f;
        c["b0"] = f->b0;
        c["r2"] = f->r2;
        c["n"] = f->n;
      } else {
        c["fit"] = nullptr;
      }
      c["scores"] = grid.scores[l][g];
      cells.push_back(std::move(c));
    }
  }
  return j.dump(2) + "\n";
}

TraceGrid GridFromJson(std::string_view text) {
  TraceGrid grid;
  try {
    const auto j = nlohmann::json::parse(text);
    grid.component = ParseComponent(j.at("component").get<std::string>());
    grid.n_layers = j.at("n_layers").get<std::size_t>();
    for (const auto& p : j.at("prompts")) {
      grid.prompts.push_back({p.at("profession").get<std::string>(),
                              p.at("template").get<std::string>(),
                              p.at("x_s").get<double>(), p.at("x_f").get<double>(),
                              p.at("clean_y").get<double>(),
                              p.at("corrupted_y").get<double>()});
    }
    grid.scores.resize(grid.n_layers);
    grid.fits.resize(grid.n_layers);
    const auto& cells = j.at("cells");
    if (cells.size() != grid.n_layers * kGroupCount) {
      throw Error(ErrorCode::kParseError, "grid needs n_layers x 6 cells");
    }
    for (const auto& c : cells) {
      const auto l = c.at("layer").get<std::size_t>();
      const auto label = c.at("group").get<std::string>();
      const auto it = std::find(kGroupLabels.begin(), kGroupLabels.end(), label);
      if (l >= grid.n_layers || it == kGroupLabels.end()) {
        throw Error(ErrorCode::kParseError, "bad grid cell");
      }
      const auto g = static_cast<std::size_t>(it - kGroupLabels.begin());
      grid.scores[l][g] = c.at("scores").get<std::vector<double>>();
      if (!c.contains("fit")) {
        biaseval::BiasRegressionFit f;
        f.a_s = c.at("a_s").get<double>();
        f.a_f = c.at("a_f").get<double>();
        f.b0 = c.at("b0").get<double>();
        f.r2 = c.at("r2").get<double>();
        f.n = c.at("n").get<std::size_t>();
        grid.fits[l][g] = f;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("grid: ") + e.what());
  }
  return grid;
}

std::string_view CoefficientName(Coefficient c) {
  switch (c) {
    case Coefficient::kAs: return "a_s";
    case Coefficient::kAf: return "a_f";
    case Coefficient::kB0: return "b0";
    case Coefficient::kR2: return "r2";
  }
  return "?";
}

std::string RenderHeatmapSvg(const TraceGrid& grid, Coefficient coefficient) {
  auto value = [&](const biaseval::BiasRegressionFit& f) {
    switch (coefficient) {
      case Coefficient::kAs: return f.a_s;
      case Coefficient::kAf: return f.a_f;
      case Coefficient::kB0: return f.b0;
      case Coefficient::kR2: return f.r2;
    }
    return 0.0;
  };
  double scale = 0.0;
  for (const auto& row : grid.fits) {
    for (const auto& f : row) {
      if (f) scale = std::max(scale, std::abs(value(*f)));
    }
  }
  if (scale == 0.0) scale = 1.0;

  constexpr int kCell = 56, kLeft = 130, kTop = 40;
  const int width = kLeft + kCell * static_cast<int>(grid.n_layers) + 20;
  const int height = kTop + kCell * static_cast<int>(kGroupCount) + 40;
  std::string svg;
  char buf[512];
  auto emit = [&](auto... args) {
    std::snprintf(buf, sizeof(buf), args...);
    svg += buf;
  };
  emit("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
       "font-family=\"monospace\" font-size=\"11\">\n", width, height);
  emit("<text x=\"%d\" y=\"20\">%s %.*s (scale +/-%.4g)</text>\n", kLeft,
       std::string(ComponentName(grid.component)).c_str(),
       static_cast<int>(CoefficientName(coefficient).size()),
       CoefficientName(coefficient).data(), scale);
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    emit("<text x=\"4\" y=\"%d\">%s</text>\n",
         kTop + kCell * static_cast<int>(g) + kCell / 2 + 4, kGroupLabels[g]);
  }
  for (std::size_t l = 0; l < grid.n_layers; ++l) {
    const int x = kLeft + kCell * static_cast<int>(l);
    emit("<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%zu</text>\n",
         x + kCell / 2, kTop + kCell * static_cast<int>(kGroupCount) + 16, l);
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      const int y = kTop + kCell * static_cast<int>(g);
      const auto& f = grid.fits[l][g];
      if (!f) {
        emit("<rect class=\"cell\" x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
             "fill=\"#cccccc\"/>\n", x, y, kCell, kCell);
        emit("<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">n/a</text>\n",
             x + kCell / 2, y + kCell / 2 + 4);
        continue;
      }
      const double v = value(*f);
      // White at zero, red for positive, blue for negative.
      const double t = std::clamp(std::abs(v) / scale, 0.0, 1.0);
      const int fade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      const int r = v >= 0 ? 255 : fade, b = v >= 0 ? fade : 255;
      emit("<rect class=\"cell\" x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
           "fill=\"#%02x%02x%02x\" data-value=\"%.17g\"/>\n",
           x, y, kCell, kCell, r, fade, b, v);
      emit("<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%.3f</text>\n",
           x + kCell / 2, y + kCell / 2 + 4, v);
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace dama::tracer
