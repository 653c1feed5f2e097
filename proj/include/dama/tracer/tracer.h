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

#ifndef DAMA_TRACER_TRACER_H_
#define DAMA_TRACER_TRACER_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dama/biaseval/regression.h"
#include "dama/datagen/lexicon.h"
#include "dama/datagen/templates.h"
#include "dama/datagen/vocabulary.h"
#include "dama/toylm/checkpoint.h"
#include "dama/toylm/transformer.h"

namespace dama::tracer {

using toylm::TokenId;

// Subject positions receive i.i.d. N(0, (multiplier * base_sigma)^2) noise
// on every embedding coordinate.
struct NoiseConfig {
  double multiplier = 3.0;
  double base_sigma = 0.0;
  std::uint64_t seed = 1;
  // Independent corruptions averaged per prompt.
  std::size_t samples = 1;

  double sigma() const { return multiplier * base_sigma; }
  // Raises kInvalidArgument unless multiplier > 0, base_sigma >= 0 and
  // samples >= 1.
  void Validate() const;
};

// base_sigma is the population standard deviation of every embedding
// coordinate of the lexicon's tokens. Raises kEmptyLexicon; appends a warning
// when the result is zero.
NoiseConfig CalibrateNoise(const toylm::ModelCheckpoint& ckpt,
                           const std::vector<datagen::ProfessionEntry>& lexicon,
                           std::vector<std::string>* warnings = nullptr);

enum class Component { kMlp, kAttn, kLayer };

std::string_view ComponentName(Component c);
// Raises kInvalidArgument for anything but "mlp", "attn" or "layer".
Component ParseComponent(std::string_view name);
toylm::Site SiteOf(Component c);

enum class TokenGroup {
  kSubjectFirst,
  kSubjectMiddle,
  kSubjectLast,
  kFirstSubsequent,
  kFurther,
  kLast,
};
inline constexpr std::size_t kGroupCount = 6;

std::string_view GroupLabel(TokenGroup g);

struct SubjectSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

// One group per position. A one-token subject is subject_last, a two-token
// subject is {first, last}. The final position is always `last`; tokens
// before the subject count as `further`.
struct TokenGrouping {
  std::vector<TokenGroup> assignment;

  // Raises kSpanOutOfRange for an empty span or one that does not end
  // before the final position.
  static TokenGrouping For(std::size_t length, SubjectSpan subject);
};

struct TracePrompt {
  std::vector<TokenId> tokens;
  SubjectSpan subject;
  datagen::ProfessionEntry profession;
  std::string template_id;
};

std::vector<TracePrompt> MakeTracePrompts(
    const datagen::Vocabulary& vocab,
    const std::vector<datagen::ProfessionEntry>& professions,
    const std::vector<datagen::PromptTemplate>& templates);

struct PromptTrace {
  std::string profession;
  std::string template_id;
  double x_s = 0.0;
  double x_f = 0.0;
  double clean_y = 0.0;
  double corrupted_y = 0.0;
};

struct TraceGrid {
  Component component = Component::kMlp;
  std::size_t n_layers = 0;
  // Canonical prompt order (sorted by tokens), independent of input order.
  std::vector<PromptTrace> prompts;
  // scores[layer][group][prompt]: mean restored y over the group's positions.
  // Empty when the group has no positions.
  std::vector<std::array<std::vector<double>, kGroupCount>> scores;
  std::vector<std::array<std::optional<biaseval::BiasRegressionFit>, kGroupCount>>
      fits;

  bool operator==(const TraceGrid&) const;
};

// Clean, corrupted and restored runs against one immutable checkpoint.
class CausalTracer {
 public:
  explicit CausalTracer(const toylm::ModelCheckpoint& ckpt);

  std::size_t n_layers() const { return model_.config().n_layers; }

  toylm::NextTokenDistribution Clean(std::span<const TokenId> tokens) const;
  // Noise sample `sample` of the prompt; deterministic in (noise.seed,
  // tokens, sample). Raises kSpanOutOfRange.
  toylm::NextTokenDistribution Corrupted(std::span<const TokenId> tokens,
                                         SubjectSpan subject,
                                         const NoiseConfig& noise,
                                         std::size_t sample = 0) const;
  // Corrupted run with the clean activation written back at every site;
  // returns P(he) - P(she) at the final position, averaged over samples.
  double Restored(std::span<const TokenId> tokens, SubjectSpan subject,
                  const NoiseConfig& noise,
                  std::span<const toylm::SiteRef> sites) const;

  // P(he) - P(she) of a distribution.
  double Score(const toylm::NextTokenDistribution& d) const;

  // Raises kDegenerateDesign when the prompts' (x_s, x_f) design cannot be
  // fitted.
  TraceGrid BuildGrid(std::span<const TracePrompt> prompts,
                      const NoiseConfig& noise, Component component) const;

 private:
  std::vector<toylm::HookSpec> NoiseHooks(std::span<const TokenId> tokens,
                                          SubjectSpan subject,
                                          const NoiseConfig& noise,
                                          std::size_t sample) const;

  toylm::Transformer<float> model_;
  std::vector<std::vector<double>> embedding_;
  TokenId he_ = 0, she_ = 0;
};

// Every attention and MLP output at every position (or every layer output
// for kLayer). Restoring all of them reproduces the clean final position.
std::vector<toylm::SiteRef> AllSites(Component component, std::size_t n_layers,
                                     std::size_t length);

std::string GridToJson(const TraceGrid& grid);
// Raises kParseError.
TraceGrid GridFromJson(std::string_view text);

enum class Coefficient { kAs, kAf, kB0, kR2 };
std::string_view CoefficientName(Coefficient c);

// Layers on x, token groups on y, diverging scale centred at zero, each cell
// annotated with its value. Byte-identical for equal grids.
std::string RenderHeatmapSvg(const TraceGrid& grid, Coefficient coefficient);

}  // namespace dama::tracer

#endif  // DAMA_TRACER_TRACER_H_
