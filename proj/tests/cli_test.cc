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

#include <array>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dama/cli/commands.h"
#include "dama/cli/config.h"
#include "dama/common/error.h"
#include "dama/common/io.h"
#include "dama/toylm/checkpoint.h"

namespace dama::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result Invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = Run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small enough to train in about a second; d_model 64 admits d_n up to 32.
constexpr const char* kTinyConfig =
    "# small model for command tests\n"
    "model.d_model=64\n"
    "model.d_ff=64\n"
    "model.n_layers=2\n"
    "model.n_heads=4\n"
    "train.steps=80\n"
    "corpus.n_sentences=2000\n"
    "heldout.n_sentences=200\n"
    "value.steps=3\n"
    "dama.kl_prompts=4\n"
    "templates.filter=false\n";

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::path(::testing::TempDir()) / "dama_cli_test");
    fs::remove_all(*dir_);
    fs::create_directories(*dir_);
    WriteFileAtomic(Path("tiny.cfg"), kTinyConfig);
    const Result r = Invoke({"train", "--config", Path("tiny.cfg"), "--out", Path("m.dmk")});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }
  static std::string Path(const std::string& name) { return (*dir_ / name).string(); }
  static std::vector<std::string> WithModel(std::vector<std::string> args) {
    args.insert(args.end(), {"--config", Path("tiny.cfg"), "--model", Path("m.dmk")});
    return args;
  }

  static fs::path* dir_;
};
fs::path* CliTest::dir_ = nullptr;

TEST(RunConfigTest, DefaultsSerializeAndMergeBack) {
  RunConfig a;
  a.Set("train.steps", "17");
  RunConfig b;
  b.Merge(a.Serialize());
  EXPECT_EQ(a.values(), b.values());
  EXPECT_EQ(b.GetUint("train.steps"), 17u);
}

TEST(RunConfigTest, RejectsUnknownKeysAndMalformedLines) {
  RunConfig c;
  try {
    c.Set("train.stepz", "1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  try {
    c.Merge("train.steps 5\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
  }
}

TEST(RunConfigTest, CommentsBlanksAndTypedGetters) {
  RunConfig c;
  c.Merge("# comment\n\n  seed = 9 \nsweep.d_n=2,3,5\ntemplates.filter=false\n");
  EXPECT_EQ(c.GetUint("seed"), 9u);
  EXPECT_EQ(c.GetUintList("sweep.d_n"), (std::vector<std::size_t>{2, 3, 5}));
  EXPECT_FALSE(c.GetBool("templates.filter"));
  c.Set("train.lr", "abc");
  EXPECT_THROW(c.GetDouble("train.lr"), Error);
}

TEST(RunConfigTest, DerivedSeedsDifferAcrossStreamsAndSeeds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s : {1u, 2u}) {
    for (SeedStream k : {SeedStream::kCorpus, SeedStream::kModelInit, SeedStream::kTraining,
                         SeedStream::kHeldOut, SeedStream::kSplit, SeedStream::kNoise}) {
      seen.insert(DeriveSeed(s, k));
    }
  }
  EXPECT_EQ(seen.size(), 12u);
  EXPECT_EQ(DeriveSeed(1, SeedStream::kCorpus), DeriveSeed(1, SeedStream::kCorpus));
}

TEST_F(CliTest, MissingConfigFileIsUsageError) {
  const Result r = Invoke({"train", "--config", Path("absent.cfg"), "--out", Path("x.dmk")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.cfg"), std::string::npos);
}

TEST_F(CliTest, MissingFlagsAndUnknownCommandsAreUsageErrors) {
  EXPECT_EQ(Invoke({}).code, 1);
  EXPECT_EQ(Invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(Invoke({"train"}).code, 1);
  EXPECT_EQ(Invoke({"bias-eval", "--config", Path("tiny.cfg")}).code, 1);
  EXPECT_EQ(Invoke(WithModel({"bias-eval", "--split", "dev"})).code, 1);
  EXPECT_EQ(Invoke(WithModel({"bias-eval", "--set", "noequals"})).code, 1);
  EXPECT_EQ(Invoke({"--version"}).code, 0);
}

TEST_F(CliTest, InvalidComponentIsUsageError) {
  EXPECT_EQ(Invoke(WithModel({"trace", "--component", "mlpx"})).code, 1);
  EXPECT_EQ(Invoke(WithModel({"trace", "--set", "trace.component=heads"})).code, 1);
}

TEST_F(CliTest, UnknownKeyAndEmptyBandAreConfigErrors) {
  EXPECT_EQ(Invoke(WithModel({"perplexity", "--set", "model.depth=3"})).code, 2);
  // 65..93 percent of two layers floors to [1, 1).
  const Result r = Invoke(WithModel({"dama"}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("EmptyLayerBand"), std::string::npos);
}

TEST_F(CliTest, CheckpointRoundTripsAndTrainingIsDeterministic) {
  const std::string bytes = ReadFile(Path("m.dmk"));
  EXPECT_EQ(toylm::SerializeCheckpoint(toylm::LoadCheckpoint(Path("m.dmk"))), bytes);
  ASSERT_EQ(Invoke({"train", "--config", Path("tiny.cfg"), "--out", Path("m2.dmk")}).code, 0);
  EXPECT_EQ(ReadFile(Path("m2.dmk")), bytes);
  Json a = Json::parse(ReadFile(Path("m.dmk.json")));
  Json b = Json::parse(ReadFile(Path("m2.dmk.json")));
  a.erase("checkpoint");
  b.erase("checkpoint");
  EXPECT_EQ(a, b);
  EXPECT_LT(a["heldout_perplexity"].get<double>(), a["unigram_perplexity"].get<double>());
}

TEST_F(CliTest, ReportsEmbedVersionAndResolvedConfig) {
  WriteFileAtomic(Path("seeded.cfg"), std::string(kTinyConfig) + "seed=5\nsplit=train\n");
  const Result r = Invoke({"perplexity", "--config", Path("seeded.cfg"), "--model",
                           Path("m.dmk"), "--set", "seed=6", "--set", "split=all",
                           "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["tool"], kVersion);
  EXPECT_EQ(j["command"], "perplexity");
  // File, then --set, then --seed.
  EXPECT_EQ(j["config"]["seed"], "1");
  EXPECT_EQ(j["config"]["split"], "all");
  EXPECT_EQ(j["config"]["model.d_model"], "64");
  RunConfig defaults;
  EXPECT_EQ(j["config"].size(), defaults.values().size());
}

TEST_F(CliTest, BiasEvalFitsTestSplitAndMatchesOfflineRefit) {
  const Result r = Invoke(WithModel({"bias-eval", "--split", "test"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  for (const char* k : {"a_s", "a_f", "b0", "r2", "n"}) EXPECT_TRUE(j["fit"].contains(k)) << k;

  const Json train = Json::parse(Invoke(WithModel({"bias-eval", "--split", "train"})).out);
  std::set<std::string> test_words, train_words;
  for (const auto& w : j["professions"]) test_words.insert(w.get<std::string>());
  for (const auto& w : train["professions"]) train_words.insert(w.get<std::string>());
  for (const auto& o : j["observations"]) {
    EXPECT_TRUE(test_words.count(o["profession"].get<std::string>()));
    EXPECT_FALSE(train_words.count(o["profession"].get<std::string>()));
  }

  // Normal equations on (x_s, x_f, 1) solved by Cramer's rule.
  std::array<std::array<double, 3>, 3> g{};
  std::array<double, 3> rhs{};
  for (const auto& o : j["observations"]) {
    const std::array<double, 3> x = {o["x_s"].get<double>(), o["x_f"].get<double>(), 1.0};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) g[a][b] += x[a] * x[b];
      rhs[a] += x[a] * o["y"].get<double>();
    }
  }
  auto det = [](const std::array<std::array<double, 3>, 3>& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  const double d = det(g);
  std::array<double, 3> coef{};
  for (int c = 0; c < 3; ++c) {
    auto m = g;
    for (int a = 0; a < 3; ++a) m[a][c] = rhs[a];
    coef[c] = det(m) / d;
  }
  EXPECT_NEAR(j["fit"]["a_s"].get<double>(), coef[0], 1e-9);
  EXPECT_NEAR(j["fit"]["a_f"].get<double>(), coef[1], 1e-9);
  EXPECT_NEAR(j["fit"]["b0"].get<double>(), coef[2], 1e-9);
  EXPECT_EQ(j["fit"]["n"].get<std::size_t>(), j["observations"].size());
}

TEST_F(CliTest, TraceHeatmapsHaveOneCellPerLayerAndGroupAndReRenderIdentically) {
  const Result r = Invoke(WithModel({"trace", "--out", Path("grid.json"), "--heatmap",
                                     Path("heat"), "--noise-samples", "2"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = ReadFile(Path("heat_a_s.svg"));
  std::size_t cells = 0;
  for (std::size_t at = svg.find("class=\"cell\""); at != std::string::npos;
       at = svg.find("class=\"cell\"", at + 1)) {
    ++cells;
  }
  EXPECT_EQ(cells, 2u * 6u);
  ASSERT_EQ(Invoke({"trace", "--render", Path("grid.json"), "--heatmap", Path("again")}).code,
            0);
  for (const char* c : {"a_s", "a_f", "b0", "r2"}) {
    EXPECT_EQ(ReadFile(Path(std::string("heat_") + c + ".svg")),
              ReadFile(Path(std::string("again_") + c + ".svg")))
        << c;
  }
  const Json grid = Json::parse(ReadFile(Path("grid.json")));
  EXPECT_EQ(grid["config"]["noise.samples"], "2");
  EXPECT_EQ(grid["component"], "mlp");
}

TEST_F(CliTest, TraceIsReproducibleUnderFixedSeed) {
  const Result a = Invoke(WithModel({"trace", "--component", "attn"}));
  const Result b = Invoke(WithModel({"trace", "--component", "attn"}));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const Result c = Invoke(WithModel({"trace", "--component", "attn", "--seed", "2"}));
  EXPECT_NE(a.out, c.out);
}

TEST_F(CliTest, SweepPostEditNormsAreMonotoneInDn) {
  const Result r = Invoke(WithModel({"sweep", "--set", "sweep.start_layer=1"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  ASSERT_EQ(j["rows"].size(), 4u);
  double previous = INFINITY;
  std::vector<std::size_t> dns;
  for (const auto& row : j["rows"]) {
    dns.push_back(row["d_n"].get<std::size_t>());
    ASSERT_EQ(row["layers"], Json::array({1}));
    const double norm = row["edits"][0]["post_norm"].get<double>();
    EXPECT_LE(norm, previous * (1.0 + 1e-12));
    EXPECT_LE(norm, row["edits"][0]["pre_norm"].get<double>());
    previous = norm;
  }
  EXPECT_EQ(dns, (std::vector<std::size_t>{4, 8, 16, 32}));
}

TEST_F(CliTest, SweepBandMapsToConsecutiveLayers) {
  const Result r = Invoke(WithModel(
      {"sweep", "--set", "sweep.start_layer=0", "--set", "sweep.layer_counts=1,2",
       "--set", "sweep.d_n=4"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][0]["layers"], Json::array({0}));
  EXPECT_EQ(j["rows"][1]["layers"], Json::array({0, 1}));
}

TEST_F(CliTest, DamaSeedReplicationReportsMeanAndStd) {
  const Result r =
      Invoke(WithModel({"dama", "--seeds", "2", "--set", "dama.layer_lo_pct=50", "--set",
                        "dama.layer_hi_pct=100", "--out", Path("edited.dmk")}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(ReadFile(Path("edited.dmk.json")));
  ASSERT_EQ(j["runs"].size(), 2u);
  EXPECT_EQ(j["runs"][0]["seed"], 1);
  EXPECT_EQ(j["runs"][1]["seed"], 2);
  for (const char* k : {"a_s", "b0"}) {
    const double x0 = j["runs"][0]["post"][k].get<double>();
    const double x1 = j["runs"][1]["post"][k].get<double>();
    EXPECT_NEAR(j["summary"][k]["mean"].get<double>(), (x0 + x1) / 2, 1e-15);
    EXPECT_NEAR(j["summary"][k]["std"].get<double>(), std::abs(x0 - x1) / std::sqrt(2.0),
                1e-15);
  }
  const toylm::ModelCheckpoint before = toylm::LoadCheckpoint(Path("m.dmk"));
  const toylm::ModelCheckpoint after = toylm::LoadCheckpoint(Path("edited.dmk"));
  EXPECT_EQ(after.ParameterCount(), before.ParameterCount());
  EXPECT_EQ(after.config, before.config);
  EXPECT_NE(after.at(toylm::names::WOut(1)).values, before.at(toylm::names::WOut(1)).values);
  EXPECT_EQ(after.at(toylm::names::WOut(0)).values, before.at(toylm::names::WOut(0)).values);
}

TEST_F(CliTest, EvalSuiteHasFourReportsAndConsistentIcat) {
  const Result a = Invoke(WithModel({"eval-suite"}));
  ASSERT_EQ(a.code, 0) << a.err;
  const Json j = Json::parse(a.out);
  for (const char* k : {"bias", "coref", "stereoset", "perplexity"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  const double lms = j["stereoset"]["lms"].get<double>();
  const double ss = j["stereoset"]["ss"].get<double>();
  EXPECT_NEAR(j["stereoset"]["icat"].get<double>(), lms * std::min(ss, 100.0 - ss) / 50.0,
              1e-9);
  EXPECT_GE(j["perplexity"]["model"].get<double>(), 1.0);
  const Result b = Invoke(WithModel({"eval-suite"}));
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, LexiconMismatchIsConfigError) {
  WriteFileAtomic(Path("small.json"),
                  R"([["nurse", 0.0, -0.8], ["pilot", 0.0, 0.7]])");
  const Result r =
      Invoke(WithModel({"perplexity", "--set", "professions=" + Path("small.json")}));
  EXPECT_EQ(r.code, 2);
}

}  // namespace
}  // namespace dama::cli
