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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dama/common/error.h"
#include "dama/datagen/templates.h"
#include "dama/tracer/tracer.h"

namespace dama::tracer {
namespace {

using datagen::ProfessionEntry;
using toylm::Site;
using toylm::SiteRef;

std::vector<ProfessionEntry> Professions() {
  return {{"nurse", -0.1, -0.8}, {"plumber", 0.1, 0.8}, {"clerk", 0.0, 0.1},
          {"pilot", 0.05, 0.6}, {"dancer", -0.05, -0.5}, {"king", 0.9, 0.3}};
}

struct Fixture {
  explicit Fixture(std::size_t n_layers = 3) {
    toylm::ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.n_layers = n_layers;
    cfg.n_heads = 2;
    cfg.seed = 5;
    ckpt = toylm::InitCheckpoint(cfg, vocab.words());
    noise = CalibrateNoise(ckpt, Professions());
    prompts = MakeTracePrompts(vocab, Professions(),
                               {datagen::TemplateById("said_that"),
                                datagen::TemplateById("was_fired_because")});
  }
  datagen::Vocabulary vocab = datagen::BuildVocabulary(datagen::DefaultLexicon());
  toylm::ModelCheckpoint ckpt;
  NoiseConfig noise;
  std::vector<TracePrompt> prompts;
};

TEST(NoiseTest, CalibratesPopulationStdOfProfessionEmbeddings) {
  Fixture fx;
  auto& emb = fx.ckpt.at(toylm::names::kEmbedding).values;
  const std::vector<ProfessionEntry> two = {{"nurse", 0, 0}, {"clerk", 0, 0}};
  const auto a = static_cast<std::size_t>(fx.vocab.Id("nurse"));
  const auto b = static_cast<std::size_t>(fx.vocab.Id("clerk"));
  for (std::size_t j = 0; j < 16; ++j) {
    emb(a, j) = 1.0f;
    emb(b, j) = j < 8 ? 3.0f : -1.0f;
  }
  // Values {1 x16, 3 x8, -1 x8}: mean 1, variance (8 * 4 + 8 * 4) / 32 = 2.
  const NoiseConfig n = CalibrateNoise(fx.ckpt, two);
  EXPECT_NEAR(n.base_sigma, std::sqrt(2.0), 1e-9);
  EXPECT_EQ(n.multiplier, 3.0);
  EXPECT_NEAR(n.sigma(), 3.0 * std::sqrt(2.0), 1e-9);
}

TEST(NoiseTest, ZeroEmbeddingsWarnAndEmptyLexiconFails) {
  Fixture fx;
  for (float& v : fx.ckpt.at(toylm::names::kEmbedding).values.data()) v = 0.0f;
  std::vector<std::string> warnings;
  EXPECT_EQ(CalibrateNoise(fx.ckpt, Professions(), &warnings).base_sigma, 0.0);
  EXPECT_EQ(warnings.size(), 1u);
  try {
    CalibrateNoise(fx.ckpt, {});
    FAIL() << "expected EmptyLexicon";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyLexicon);
  }
}

TEST(NoiseTest, MultiplierOverrideIsRecorded) {
  NoiseConfig n;
  n.base_sigma = 0.5;
  n.multiplier = 1.0;
  EXPECT_NO_THROW(n.Validate());
  EXPECT_EQ(n.sigma(), 0.5);
  n.multiplier = 0.0;
  EXPECT_THROW(n.Validate(), Error);
  n.multiplier = 1.0;
  n.samples = 0;
  EXPECT_THROW(n.Validate(), Error);
}

TEST(GroupingTest, AssignsEveryPositionOnce) {
  // <s> the nurse said that
  const auto one = TokenGrouping::For(5, {2, 3});
  EXPECT_EQ(one.assignment,
            (std::vector<TokenGroup>{TokenGroup::kFurther, TokenGroup::kFurther,
                                     TokenGroup::kSubjectLast,
                                     TokenGroup::kFirstSubsequent, TokenGroup::kLast}));
  const auto two = TokenGrouping::For(6, {1, 3});
  EXPECT_EQ(two.assignment[1], TokenGroup::kSubjectFirst);
  EXPECT_EQ(two.assignment[2], TokenGroup::kSubjectLast);
  const auto four = TokenGrouping::For(9, {1, 5});
  EXPECT_EQ(four.assignment,
            (std::vector<TokenGroup>{
                TokenGroup::kFurther, TokenGroup::kSubjectFirst,
                TokenGroup::kSubjectMiddle, TokenGroup::kSubjectMiddle,
                TokenGroup::kSubjectLast, TokenGroup::kFirstSubsequent,
                TokenGroup::kFurther, TokenGroup::kFurther, TokenGroup::kLast}));
}

TEST(GroupingTest, RejectsBadSpans) {
  for (SubjectSpan s : {SubjectSpan{2, 2}, SubjectSpan{3, 2}, SubjectSpan{2, 5},
                        SubjectSpan{4, 5}}) {
    try {
      TokenGrouping::For(5, s);
      FAIL() << s.begin << "," << s.end;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kSpanOutOfRange);
    }
  }
}

TEST(CorruptionTest, ZeroNoiseIsBitIdenticalToClean) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  NoiseConfig zero = fx.noise;
  zero.base_sigma = 0.0;
  for (const auto& p : fx.prompts) {
    EXPECT_EQ(tracer.Corrupted(p.tokens, p.subject, zero).probabilities,
              tracer.Clean(p.tokens).probabilities);
  }
}

TEST(CorruptionTest, IsDeterministicInSeedAndChangesTheOutput) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  const auto& p = fx.prompts[0];
  const auto a = tracer.Corrupted(p.tokens, p.subject, fx.noise);
  EXPECT_EQ(a.probabilities, tracer.Corrupted(p.tokens, p.subject, fx.noise).probabilities);
  EXPECT_NE(a.probabilities, tracer.Clean(p.tokens).probabilities);
  NoiseConfig other = fx.noise;
  other.seed = 2;
  EXPECT_NE(a.probabilities, tracer.Corrupted(p.tokens, p.subject, other).probabilities);
  EXPECT_NE(a.probabilities, tracer.Corrupted(p.tokens, p.subject, fx.noise, 1).probabilities);
  try {
    tracer.Corrupted(p.tokens, {0, p.tokens.size()}, fx.noise);
    FAIL() << "expected SpanOutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSpanOutOfRange);
  }
}

TEST(RestorationTest, RestoringEverySiteGivesTheCleanScore) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  for (Component c : {Component::kMlp, Component::kAttn, Component::kLayer}) {
    for (const auto& p : fx.prompts) {
      const double clean = tracer.Score(tracer.Clean(p.tokens));
      const auto sites = AllSites(c, tracer.n_layers(), p.tokens.size());
      EXPECT_NEAR(tracer.Restored(p.tokens, p.subject, fx.noise, sites), clean, 1e-6);
    }
  }
}

TEST(RestorationTest, RestoringTheSubjectEmbeddingUndoesTheCorruption) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  NoiseConfig averaged = fx.noise;
  averaged.samples = 3;
  for (const auto& p : fx.prompts) {
    std::vector<SiteRef> sites;
    for (std::size_t i = p.subject.begin; i < p.subject.end; ++i) {
      sites.push_back({Site::kEmbedding, 0, i});
    }
    const double clean = tracer.Score(tracer.Clean(p.tokens));
    EXPECT_EQ(tracer.Restored(p.tokens, p.subject, fx.noise, sites), clean);
    // Averaging three identical scores may round in the last place.
    EXPECT_NEAR(tracer.Restored(p.tokens, p.subject, averaged, sites), clean, 1e-15);
  }
}

TEST(RestorationTest, ZeroNoiseRestoresToCleanAtAnySite) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  NoiseConfig zero = fx.noise;
  zero.base_sigma = 0.0;
  const auto& p = fx.prompts[3];
  const double clean = tracer.Score(tracer.Clean(p.tokens));
  for (Site s : {Site::kAttnOut, Site::kMlpOut, Site::kLayerOut}) {
    for (std::size_t l = 0; l < tracer.n_layers(); ++l) {
      for (std::size_t t = 0; t < p.tokens.size(); ++t) {
        const SiteRef site[] = {{s, l, t}};
        EXPECT_EQ(tracer.Restored(p.tokens, p.subject, zero, site), clean);
      }
    }
  }
}

TEST(RestorationTest, IdentityTopBlockMatchesTheLayerBelow) {
  Fixture fx;
  const std::size_t top = fx.ckpt.config.n_layers - 1;
  for (const std::string& name : {toylm::names::Wo(top), toylm::names::WOut(top)}) {
    for (float& v : fx.ckpt.at(name).values.data()) v = 0.0f;
  }
  const CausalTracer tracer(fx.ckpt);
  for (const auto& p : fx.prompts) {
    for (std::size_t t = 0; t < p.tokens.size(); ++t) {
      const SiteRef below[] = {{Site::kLayerOut, top - 1, t}};
      const SiteRef above[] = {{Site::kLayerOut, top, t}};
      EXPECT_EQ(tracer.Restored(p.tokens, p.subject, fx.noise, below),
                tracer.Restored(p.tokens, p.subject, fx.noise, above));
    }
  }
}

TEST(GridTest, SingleLayerModelHasSixCells) {
  const Fixture fx(1);
  const CausalTracer tracer(fx.ckpt);
  const TraceGrid g = tracer.BuildGrid(fx.prompts, fx.noise, Component::kMlp);
  EXPECT_EQ(g.n_layers, 1u);
  ASSERT_EQ(g.fits.size(), 1u);
  EXPECT_EQ(g.fits[0].size(), kGroupCount);
  EXPECT_EQ(g.prompts.size(), fx.prompts.size());
  // Single-token professions leave subject_first and subject_middle empty.
  EXPECT_FALSE(g.fits[0][0].has_value());
  EXPECT_FALSE(g.fits[0][1].has_value());
  for (std::size_t k = 2; k < kGroupCount; ++k) {
    ASSERT_TRUE(g.fits[0][k].has_value());
    EXPECT_EQ(g.fits[0][k]->n, fx.prompts.size());
  }
}

TEST(GridTest, IsIndependentOfPromptOrderAndReproducible) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  const TraceGrid a = tracer.BuildGrid(fx.prompts, fx.noise, Component::kAttn);
  auto shuffled = fx.prompts;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[1], shuffled[4]);
  EXPECT_TRUE(tracer.BuildGrid(shuffled, fx.noise, Component::kAttn) == a);
  EXPECT_TRUE(CausalTracer(fx.ckpt).BuildGrid(fx.prompts, fx.noise, Component::kAttn) == a);
  NoiseConfig other = fx.noise;
  other.seed = 9;
  EXPECT_FALSE(tracer.BuildGrid(fx.prompts, other, Component::kAttn) == a);
}

TEST(GridTest, LastGroupScoresEqualRestoringTheLastToken) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  const TraceGrid g = tracer.BuildGrid(fx.prompts, fx.noise, Component::kMlp);
  const auto last = static_cast<std::size_t>(TokenGroup::kLast);
  // The grid sorts prompts by tokens; find each one by name.
  for (std::size_t i = 0; i < g.prompts.size(); ++i) {
    const auto it = std::find_if(fx.prompts.begin(), fx.prompts.end(), [&](const auto& p) {
      return p.profession.word == g.prompts[i].profession &&
             p.template_id == g.prompts[i].template_id;
    });
    ASSERT_NE(it, fx.prompts.end());
    for (std::size_t l = 0; l < g.n_layers; ++l) {
      const SiteRef site[] = {{Site::kMlpOut, l, it->tokens.size() - 1}};
      EXPECT_EQ(g.scores[l][last][i],
                tracer.Restored(it->tokens, it->subject, fx.noise, site));
    }
    EXPECT_EQ(g.prompts[i].clean_y, tracer.Score(tracer.Clean(it->tokens)));
  }
}

TEST(GridTest, RejectsDegenerateDesigns) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  const std::vector<TracePrompt> two(fx.prompts.begin(), fx.prompts.begin() + 2);
  try {
    tracer.BuildGrid(two, fx.noise, Component::kMlp);
    FAIL() << "expected DegenerateDesign";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateDesign);
  }
}

TEST(GridTest, JsonRoundTripAndDeterministicHeatmaps) {
  const Fixture fx;
  const CausalTracer tracer(fx.ckpt);
  const TraceGrid g = tracer.BuildGrid(fx.prompts, fx.noise, Component::kLayer);
  const std::string json = GridToJson(g);
  const TraceGrid back = GridFromJson(json);
  EXPECT_TRUE(back == g);
  EXPECT_EQ(GridToJson(back), json);
  for (Coefficient c : {Coefficient::kAs, Coefficient::kAf, Coefficient::kB0,
                        Coefficient::kR2}) {
    const std::string svg = RenderHeatmapSvg(g, c);
    EXPECT_EQ(RenderHeatmapSvg(back, c), svg);
    std::size_t cells = 0;
    for (auto pos = svg.find("class=\"cell\""); pos != std::string::npos;
         pos = svg.find("class=\"cell\"", pos + 1)) {
      ++cells;
    }
    EXPECT_EQ(cells, g.n_layers * kGroupCount);
  }
  EXPECT_THROW(GridFromJson("{}"), Error);
  EXPECT_THROW(GridFromJson("not json"), Error);
}

TEST(ComponentTest, ParsesKnownNamesOnly) {
  EXPECT_EQ(ParseComponent("mlp"), Component::kMlp);
  EXPECT_EQ(ParseComponent("attn"), Component::kAttn);
  EXPECT_EQ(ParseComponent("layer"), Component::kLayer);
  EXPECT_THROW(ParseComponent("head"), Error);
}

}  // namespace
}  // namespace dama::tracer
