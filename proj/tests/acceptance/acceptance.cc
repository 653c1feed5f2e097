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

// Acceptance run: one PASS/FAIL line per criterion. The trained model of the
// end-to-end criteria is cached in the directory given as the first argument
// and reused while its resolved configuration is unchanged.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dama/biaseval/coref.h"
#include "dama/biaseval/perplexity.h"
#include "dama/biaseval/regression.h"
#include "dama/biaseval/stereo.h"
#include "dama/cli/config.h"
#include "dama/cli/pipeline.h"
#include "dama/common/error.h"
#include "dama/common/io.h"
#include "dama/damaedit/dama.h"
#include "dama/datagen/corpus.h"
#include "dama/linalg/pls.h"
#include "dama/linalg/projection.h"
#include "dama/linalg/solvers.h"
#include "dama/toylm/checkpoint.h"
#include "dama/toylm/train.h"
#include "dama/toylm/transformer.h"
#include "dama/tracer/tracer.h"
#include "test_util.h"

namespace dama {
namespace {

namespace fs = std::filesystem;
using linalg::MatrixD;
using testing::RandomMatrix;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

double SquaredNorm(const MatrixD& m) {
  const double f = linalg::FrobeniusNorm(m);
  return f * f;
}

std::size_t Uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Outcome ConstrainedLeastSquares() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> log_scale(-3.0, 0.0);
  double worst_leak = 0.0, worst_margin = INFINITY;
  std::size_t beaten = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t in = Uniform(rng, 2, 16), out = Uniform(rng, 2, 16);
    const std::size_t n = Uniform(rng, in, 64), d_n = Uniform(rng, 1, out - 1);
    const MatrixD u = RandomMatrix(in, n, rng), v = RandomMatrix(out, n, rng);
    const linalg::Projection guard = linalg::ProjectionFromBasis(RandomMatrix(out, d_n, rng));
    const MatrixD w = linalg::SolveConstrainedOls(u, v, guard);
    const MatrixD onto = guard.OntoGuarded();
    for (int k = 0; k < 100; ++k) {
      const MatrixD wx = linalg::Multiply(w, RandomMatrix(in, 1, rng));
      worst_leak = std::max(worst_leak, linalg::FrobeniusNorm(linalg::Multiply(onto, wx)) /
                                            linalg::FrobeniusNorm(wx));
    }
    const double cost = SquaredNorm(linalg::Subtract(linalg::Multiply(w, u), v));
    for (int k = 0; k < 1000; ++k) {
      // (I - P_c) R keeps the perturbed map feasible.
      const MatrixD d = linalg::Scale(linalg::Multiply(guard.matrix, RandomMatrix(out, in, rng)),
                                      std::pow(10.0, log_scale(rng)));
      const double other =
          SquaredNorm(linalg::Subtract(linalg::Multiply(linalg::Add(w, d), u), v));
      worst_margin = std::min(worst_margin, other - cost);
      if (cost <= other) ++beaten;
    }
  }
  const double t = Seconds(start);
  return {worst_leak < 1e-8 && beaten == 100000 && t < 10.0,
          Format("max leak %.2e (< 1e-8), beats %zu/100000 feasible perturbations "
                 "(min margin %.2e), %.2f s (< 10 s)",
                 worst_leak, beaten, worst_margin, t)};
}

Outcome PythagoreanSplit() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t out = Uniform(rng, 2, 16), in = Uniform(rng, 1, 16);
    const linalg::Projection guard =
        linalg::ProjectionFromBasis(RandomMatrix(out, Uniform(rng, 1, out - 1), rng));
    // W = (I - P_c) R puts W u in the complement of C for every u.
    const MatrixD w = linalg::Multiply(guard.matrix, RandomMatrix(out, in, rng));
    const MatrixD u = RandomMatrix(in, 1, rng), v = RandomMatrix(out, 1, rng);
    const MatrixD wu = linalg::Multiply(w, u);
    const double lhs = SquaredNorm(linalg::Subtract(wu, v));
    const double rhs = SquaredNorm(linalg::Subtract(wu, linalg::Multiply(guard.matrix, v))) +
                       SquaredNorm(linalg::Multiply(guard.OntoGuarded(), v));
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  return {worst < 1e-8, Format("max relative gap %.2e over 1000 instances (< 1e-8)", worst)};
}

Outcome PlsRecovery() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t k = Uniform(rng, 1, 4), dim = Uniform(rng, k + 1, 32);
    const std::size_t targets = Uniform(rng, k, 8), n = Uniform(rng, 2 * dim, 128);
    // x = B z and y = C z with a rank-k latent z: the predictive subspace is
    // span(B).
    const MatrixD b = RandomMatrix(dim, k, rng), c = RandomMatrix(targets, k, rng);
    const MatrixD z = RandomMatrix(k, n, rng);
    const linalg::PlsFit fit =
        linalg::FitPls(linalg::Multiply(b, z), linalg::Multiply(c, z), k);
    worst = std::max(worst, testing::MaxPrincipalAngle(testing::ToEigen(fit.b1),
                                                       testing::ToEigen(b)));
  }
  return {worst < 1e-3,
          Format("max principal angle %.2e rad over 100 instances (< 1e-3)", worst)};
}

Outcome GradientCheck() {
  toylm::ModelConfig c;
  c.vocab_size = 20;
  c.d_model = 16;
  c.d_ff = 32;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_seq = 12;
  c.seed = 4;
  std::vector<std::string> words;
  for (std::size_t i = 0; i < c.vocab_size; ++i) words.push_back("w" + std::to_string(i));
  toylm::Transformer<double> net(toylm::InitCheckpoint(c, words));
  std::mt19937_64 rng(404);
  std::vector<std::vector<toylm::TokenId>> batch;
  for (int s = 0; s < 4; ++s) {
    std::vector<toylm::TokenId> seq;
    for (std::size_t t = 0, len = Uniform(rng, 4, c.max_seq); t < len; ++t) {
      seq.push_back(static_cast<toylm::TokenId>(Uniform(rng, 0, c.vocab_size - 1)));
    }
    batch.push_back(seq);
  }
  std::vector<double> grad;
  net.LossAndParameterGradient(batch, &grad);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t zero = 0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t i = Uniform(rng, 0, net.parameter_count() - 1);
    const double saved = net.parameters()[i];
    net.mutable_parameters()[i] = saved + h;
    net.RefreshDerived();
    const double lp = net.LossAndParameterGradient(batch, nullptr);
    net.mutable_parameters()[i] = saved - h;
    net.RefreshDerived();
    const double lm = net.LossAndParameterGradient(batch, nullptr);
    net.mutable_parameters()[i] = saved;
    net.RefreshDerived();
    const double fd = (lp - lm) / (2 * h);
    const double scale = std::max(std::abs(fd), std::abs(grad[i]));
    // Coordinates the loss does not depend on are exactly zero both ways.
    if (scale == 0.0) {
      ++zero;
      continue;
    }
    worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  return {net.parameter_count() <= 10000 && worst < 1e-4,
          Format("%zu parameters, max relative error %.2e on 200 coordinates "
                 "(%zu exactly zero both ways) (< 1e-4)",
                 net.parameter_count(), worst, zero)};
}

Outcome RegressionRecovery() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> x(-1.0, 1.0);
  std::vector<double> xs, xf, y;
  for (int i = 0; i < 200; ++i) {
    xs.push_back(x(rng));
    xf.push_back(x(rng));
    y.push_back(0.3 * xs.back() + 0.5 * xf.back() + 0.1);
  }
  const biaseval::BiasRegressionFit f = biaseval::FitBiasRegression(xs, xf, y);
  const double err =
      std::max({std::abs(f.a_s - 0.3), std::abs(f.a_f - 0.5), std::abs(f.b0 - 0.1)});
  return {err < 1e-9 && f.r2 == 1.0,
          Format("max coefficient error %.2e (< 1e-9), R^2 = %.17g", err, f.r2)};
}

Outcome MetricFormulas() {
  const double a = biaseval::Icat(100.0, 50.0);
  const double b = biaseval::Icat(95.2, 71.9);
  // ss = 71.9 leaves 100 - ss = 28.1 anti-stereotypical.
  const bool icat_ok = std::abs(a - 100.0) < 1e-12 && std::abs(b - 95.2 * 28.1 / 50.0) < 1e-12 &&
                       std::round(b * 10.0) / 10.0 == 53.5;

  std::mt19937_64 rng(909);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<biaseval::CorefItem> items(Uniform(rng, 8, 64));
    std::vector<int> pred;
    for (auto& it : items) {
      it.pro_stereotypical = coin(rng);
      it.male_pronoun = coin(rng);
      it.gold = coin(rng);
      pred.push_back(coin(rng));
    }
    // Every stratum needs at least one item.
    items[0].pro_stereotypical = true;
    items[1].pro_stereotypical = false;
    items[2].male_pronoun = true;
    items[3].male_pronoun = false;
    const biaseval::CorefReport base = biaseval::ScoreCoref(items, pred);
    auto flipped_s = items, flipped_g = items;
    for (auto& it : flipped_s) it.pro_stereotypical = !it.pro_stereotypical;
    for (auto& it : flipped_g) it.male_pronoun = !it.male_pronoun;
    worst = std::max({worst,
                      std::abs(biaseval::ScoreCoref(flipped_s, pred).delta_s + base.delta_s),
                      std::abs(biaseval::ScoreCoref(flipped_g, pred).delta_g + base.delta_g)});
  }
  return {icat_ok && worst < 1e-12,
          Format("icat(100,50) = %.6f, icat(95.2,71.9) = %.6f (rounds to 53.5; 53.7 follows "
                 "from unrounded inputs), max antisymmetry gap %.1e",
                 a, b, worst)};
}

// Everything the end-to-end criteria share.
struct EndToEnd {
  cli::Pipeline pipeline{cli::RunConfig()};
  toylm::ModelCheckpoint model;
  double train_seconds = 0.0;  // 0 when loaded from the cache
  std::vector<datagen::PromptTemplate> templates;
  std::vector<datagen::ProfessionEntry> train, test;
};

EndToEnd PrepareModel(const fs::path& cache) {
  EndToEnd e;
  const cli::RunConfig& cfg = e.pipeline.config();
  const fs::path model_path = cache / "acceptance_model.dmk";
  const fs::path cfg_path = cache / "acceptance_model.cfg";
  fs::create_directories(cache);
  bool cached = false;
  if (fs::exists(model_path) && fs::exists(cfg_path) && ReadFile(cfg_path) == cfg.Serialize()) {
    try {
      e.model = toylm::LoadCheckpoint(model_path);
      e.pipeline.CheckModel(e.model);
      cached = true;
    } catch (const Error&) {
      cached = false;
    }
  }
  if (!cached) {
    std::fprintf(stderr, "training the default model (%s steps)...\n",
                 cfg.Get("train.steps").c_str());
    const auto start = std::chrono::steady_clock::now();
    e.model = toylm::Train(e.pipeline.ModelConfig(), e.pipeline.vocab().words(),
                           e.pipeline.TrainingCorpus().Sequences(), e.pipeline.TrainConfig())
                  .checkpoint;
    e.train_seconds = Seconds(start);
    toylm::SaveCheckpoint(e.model, model_path);
    WriteFileAtomic(cfg_path, cfg.Serialize());
  }
  e.templates = e.pipeline.EvalTemplates(e.model);
  e.train = e.pipeline.Words("train");
  e.test = e.pipeline.Words("test");
  return e;
}

biaseval::BiasRegressionFit Fit(const toylm::ModelCheckpoint& m, const EndToEnd& e) {
  return biaseval::FitBiasRegression(biaseval::CollectObservations(m, e.test, e.templates));
}

Outcome EndToEndDama(const EndToEnd& e, damaedit::DamaResult* result) {
  const auto start = std::chrono::steady_clock::now();
  const cli::Pipeline& p = e.pipeline;
  const auto pool = datagen::FillerPrompts(p.TrainingCorpus(), p.config().GetUint("dama.kl_prompts"));
  const biaseval::Sequences held = p.HeldOutCorpus();
  const biaseval::BiasRegressionFit pre = Fit(e.model, e);
  const double pre_ppl = biaseval::Perplexity(e.model, held);
  *result = damaedit::RunDama(e.model, e.train, e.templates, pool, p.EditConfig());
  const biaseval::BiasRegressionFit post = Fit(result->checkpoint, e);
  const double post_ppl = biaseval::Perplexity(result->checkpoint, held);
  const double t = Seconds(start) + e.train_seconds;

  const bool biased = pre.a_s >= 0.15;
  const bool reduced = std::abs(post.a_s) <= 0.5 * pre.a_s;
  const bool intercept = std::abs(post.b0) <= std::abs(pre.b0) + 0.05;
  const bool fluent = post_ppl <= 1.15 * pre_ppl;
  const bool factual = post.a_f >= 0.5 * pre.a_f;
  std::string layers;
  for (const auto& edit : result->edits) layers += (layers.empty() ? "" : ",") + std::to_string(edit.layer);
  return {biased && reduced && intercept && fluent && factual && t < 900.0,
          Format("pre a_s %.3f (>= 0.15: %s); a_s %.3f -> %.3f (|post| <= %.3f: %s); "
                 "b0 %.3f -> %.3f (%s); ppl %.3f -> %.3f, +%.1f%% (<= 15%%: %s); "
                 "a_f %.3f -> %.3f (>= 50%%: %s); layers [%s]; %.0f s%s",
                 pre.a_s, biased ? "yes" : "no", pre.a_s, post.a_s, 0.5 * pre.a_s,
                 reduced ? "yes" : "no", pre.b0, post.b0, intercept ? "ok" : "grew > 0.05",
                 pre_ppl, post_ppl, 100.0 * (post_ppl / pre_ppl - 1.0), fluent ? "yes" : "no",
                 pre.a_f, post.a_f, factual ? "yes" : "no", layers.c_str(), t,
                 e.train_seconds > 0 ? " including training" : " (model cached)")};
}

Outcome TracingIdentitiesAndLocalization(const EndToEnd& e, Outcome* localization) {
  const tracer::CausalTracer tr(e.model);
  const auto prompts = tracer::MakeTracePrompts(e.pipeline.vocab(), e.test, e.templates);
  tracer::NoiseConfig noise = e.pipeline.NoiseConfig(e.model);
  tracer::NoiseConfig zero = noise;
  zero.base_sigma = 0.0;

  bool zero_equal = true;
  double worst_restore = 0.0;
  for (const auto& p : prompts) {
    const auto clean = tr.Clean(p.tokens);
    zero_equal = zero_equal && tr.Corrupted(p.tokens, p.subject, zero).probabilities ==
                                   clean.probabilities;
    for (tracer::Component c : {tracer::Component::kMlp, tracer::Component::kLayer}) {
      const auto sites = tracer::AllSites(c, tr.n_layers(), p.tokens.size());
      worst_restore = std::max(
          worst_restore, std::abs(tr.Restored(p.tokens, p.subject, noise, sites) - tr.Score(clean)));
    }
  }

  const std::size_t n = tr.n_layers();
  const std::size_t last = static_cast<std::size_t>(tracer::TokenGroup::kLast);
  std::size_t hits = 0;
  bool reproducible = true;
  std::string cells;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    noise.seed = cli::DeriveSeed(s, cli::SeedStream::kNoise);
    const tracer::TraceGrid grid = tr.BuildGrid(prompts, noise, tracer::Component::kMlp);
    if (s == 1) reproducible = grid == tr.BuildGrid(prompts, noise, tracer::Component::kMlp);
    std::size_t best_l = 0, best_g = 0;
    double best = -INFINITY;
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t g = 0; g < tracer::kGroupCount; ++g) {
        if (grid.fits[l][g] && grid.fits[l][g]->a_s > best) {
          best = grid.fits[l][g]->a_s;
          best_l = l;
          best_g = g;
        }
      }
    }
    const bool hit = best_l >= n / 2 && best_g == last;
    hits += hit;
    cells += Format("%s(L%zu,%s,%.3f)", cells.empty() ? "" : " ", best_l,
                    std::string(tracer::GroupLabel(tracer::TokenGroup(best_g))).c_str(), best);
  }
  *localization = {hits >= 4, Format("max-a_s MLP cell in upper half at last token in %zu/5 "
                                     "noise seeds (>= 4): %s",
                                     hits, cells.c_str())};
  return {zero_equal && worst_restore < 1e-6 && reproducible,
          Format("zero noise bit-equal on %zu prompts: %s; max all-site restore gap %.2e "
                 "(< 1e-6); grid bit-reproducible: %s",
                 prompts.size(), zero_equal ? "yes" : "no", worst_restore,
                 reproducible ? "yes" : "no")};
}

Outcome EditHygiene(const EndToEnd& e, const damaedit::DamaResult& r) {
  bool shapes = r.checkpoint.tensors.size() == e.model.tensors.size() &&
                r.checkpoint.ParameterCount() == e.model.ParameterCount() &&
                r.checkpoint.config == e.model.config;
  for (const auto& [name, t] : e.model.tensors) {
    const auto it = r.checkpoint.tensors.find(name);
    shapes = shapes && it != r.checkpoint.tensors.end() &&
             it->second.values.rows() == t.values.rows() &&
             it->second.values.cols() == t.values.cols();
  }
  double worst = 0.0;
  for (const auto& edit : r.edits) {
    const auto once = toylm::ApplyWeightEdit(e.model, edit.layer, edit.projection.matrix);
    const auto twice = toylm::ApplyWeightEdit(once, edit.layer, edit.projection.matrix);
    const MatrixD w1 = linalg::Cast<double>(once.at(toylm::names::WOut(edit.layer)).values);
    const MatrixD w2 = linalg::Cast<double>(twice.at(toylm::names::WOut(edit.layer)).values);
    worst = std::max(worst, linalg::FrobeniusNorm(linalg::Subtract(w1, w2)) /
                                linalg::FrobeniusNorm(w1));
  }
  const std::string bytes = toylm::SerializeCheckpoint(r.checkpoint);
  const bool round_trip = toylm::SerializeCheckpoint(toylm::ParseCheckpoint(bytes)) == bytes &&
                          toylm::ParseCheckpoint(bytes) == r.checkpoint;
  return {shapes && worst < 1e-6 && round_trip,
          Format("names/shapes/parameter count preserved: %s; re-applied projection moves "
                 "W_out by %.2e relative (float storage, < 1e-6); round-trip bit-exact: %s",
                 shapes ? "yes" : "no", worst, round_trip ? "yes" : "no")};
}

void Report(int id, const char* name, const Outcome& o, int& failures) {
  std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

Outcome Guard(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& ex) {
    return {false, std::string("raised ") + ex.what()};
  }
}

}  // namespace
}  // namespace dama

int main(int argc, char** argv) {
  using namespace dama;
  const fs::path cache = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_cache");
  int failures = 0;
  Report(1, "constrained least squares", Guard(ConstrainedLeastSquares), failures);
  Report(2, "pythagorean split", Guard(PythagoreanSplit), failures);
  Report(3, "pls recovery", Guard(PlsRecovery), failures);
  Report(4, "gradient check", Guard(GradientCheck), failures);

  std::optional<EndToEnd> e;
  std::string setup_error;
  try {
    e.emplace(PrepareModel(cache));
  } catch (const std::exception& ex) {
    setup_error = std::string("model preparation raised ") + ex.what();
  }
  auto needs_model = [&](const std::function<Outcome()>& f) {
    return e ? Guard(f) : Outcome{false, setup_error};
  };

  Outcome localization{false, setup_error};
  Report(5, "tracing identities",
         needs_model([&] { return TracingIdentitiesAndLocalization(*e, &localization); }),
         failures);
  Report(6, "regression recovery", Guard(RegressionRecovery), failures);
  damaedit::DamaResult edited;
  bool have_edit = false;
  Report(7, "end-to-end edit", needs_model([&] {
           Outcome o = EndToEndDama(*e, &edited);
           have_edit = true;
           return o;
         }),
         failures);
  Report(8, "tracing localization", localization, failures);
  Report(9, "metric formulas", Guard(MetricFormulas), failures);
  Report(10, "edit hygiene",
         have_edit ? Guard([&] { return EditHygiene(*e, edited); })
                   : Outcome{false, "no edited checkpoint"},
         failures);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
