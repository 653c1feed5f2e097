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

#include "dama/cli/commands.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

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
#include "dama/toylm/checkpoint.h"
#include "dama/toylm/train.h"
#include "dama/tracer/tracer.h"

namespace dama::cli {
namespace {

using Json = nlohmann::ordered_json;

// Flags shared by every command.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void AddCommonFlags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value settings file");
  cmd->add_option("--seed", f.seed, "run seed; overrides the config");
  cmd->add_option("--set", f.sets, "key=value override, repeatable")
      ->allow_extra_args(false);
}

// File first, then --set in order, then --seed.
RunConfig ResolveConfig(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) {
    if (!std::filesystem::is_regular_file(f.config_path)) {
      throw UsageError("config file '" + f.config_path + "' not found");
    }
    cfg.Merge(ReadFile(f.config_path));
  }
  for (const std::string& kv : f.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError("--set expects key=value, got '" + kv + "'");
    }
    cfg.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.Set("seed", std::to_string(*f.seed));
  return cfg;
}

Json Header(std::string_view command, const RunConfig& cfg) {
  Json j;
  j["tool"] = kVersion;
  j["command"] = command;
  Json c = Json::object();
  for (const auto& [k, v] : cfg.values()) c[k] = v;
  j["config"] = std::move(c);
  return j;
}

void Emit(const Json& report, const std::string& path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (path.empty()) {
    out << text;
  } else {
    WriteFileAtomic(path, text);
  }
}

Json FitJson(const biaseval::BiasRegressionFit& f) {
  return Json{{"a_s", f.a_s}, {"a_f", f.a_f}, {"b0", f.b0}, {"r2", f.r2}, {"n", f.n}};
}

Json WordsJson(const std::vector<datagen::ProfessionEntry>& words) {
  Json j = Json::array();
  for (const auto& w : words) j.push_back(w.word);
  return j;
}

Json TemplatesJson(const std::vector<datagen::PromptTemplate>& templates) {
  Json j = Json::array();
  for (const auto& t : templates) j.push_back(t.id);
  return j;
}

// Mean and sample standard deviation (0 for a single value).
Json MeanStd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return Json{{"mean", mean}, {"std", sd}};
}

toylm::ModelCheckpoint LoadModel(const Pipeline& p, const std::string& path) {
  toylm::ModelCheckpoint ckpt = toylm::LoadCheckpoint(path);
  p.CheckModel(ckpt);
  return ckpt;
}

void PrintWarnings(const Pipeline& p, std::ostream& err) {
  for (const std::string& w : p.warnings()) err << "warning: " << w << "\n";
}

// Sets `key` from a flag value when the flag was given.
template <typename T>
void Override(RunConfig& cfg, std::string_view key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>) {
    cfg.Set(key, *v);
  } else {
    cfg.Set(key, std::to_string(*v));
  }
}

tracer::Component ComponentOrUsage(const std::string& name) {
  try {
    return tracer::ParseComponent(name);
  } catch (const Error&) {
    throw UsageError("component must be mlp, attn or layer, got '" + name + "'");
  }
}

Json FitOnSplit(const toylm::ModelCheckpoint& ckpt,
                const std::vector<datagen::ProfessionEntry>& words,
                const std::vector<datagen::PromptTemplate>& templates) {
  return FitJson(biaseval::FitBiasRegression(
      biaseval::CollectObservations(ckpt, words, templates)));
}

Json PerplexityJson(const Pipeline& p, const toylm::ModelCheckpoint& ckpt) {
  const biaseval::Sequences held = p.HeldOutCorpus();
  const biaseval::Sequences train = p.TrainingCorpus().Sequences();
  return Json{{"model", biaseval::Perplexity(ckpt, held)},
              {"unigram", biaseval::UnigramPerplexity(train, held, p.vocab().size())},
              {"n_sequences", held.size()}};
}

struct TrainFlags {
  std::string out;
  std::string report;
  std::string corpus_out;
};

void CmdTrain(const RunConfig& cfg, const TrainFlags& f, std::ostream& err) {
  const Pipeline p(cfg);
  PrintWarnings(p, err);
  const datagen::Corpus corpus = p.TrainingCorpus();
  const biaseval::Sequences seqs = corpus.Sequences();
  if (!f.corpus_out.empty()) {
    WriteFileAtomic(f.corpus_out, datagen::FormatCorpus(corpus, p.vocab()));
  }
  const toylm::TrainConfig tc = p.TrainConfig();
  const auto start = std::chrono::steady_clock::now();
  const toylm::TrainResult result =
      toylm::Train(p.ModelConfig(), p.vocab().words(), seqs, tc,
                   [&](std::size_t step, double loss) {
                     if ((step + 1) % 250 == 0 || step + 1 == tc.steps) {
                       err << "step " << step + 1 << "/" << tc.steps << " loss " << loss
                           << "\n";
                     }
                   });
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  toylm::SaveCheckpoint(result.checkpoint, f.out);
  err << "trained in " << seconds << " s\n";

  const biaseval::Sequences held = p.HeldOutCorpus();
  Json r = Header("train", cfg);
  r["checkpoint"] = f.out;
  r["parameters"] = result.checkpoint.ParameterCount();
  r["vocab_size"] = p.vocab().size();
  r["corpus_sentences"] = seqs.size();
  r["final_loss"] = result.losses.back();
  Json curve = Json::array();
  for (std::size_t i = 0; i < result.losses.size(); i += 100) curve.push_back(result.losses[i]);
  r["loss_every_100_steps"] = std::move(curve);
  r["heldout_perplexity"] = biaseval::Perplexity(result.checkpoint, held);
  r["unigram_perplexity"] = biaseval::UnigramPerplexity(seqs, held, p.vocab().size());
  WriteFileAtomic(f.report.empty() ? f.out + ".json" : f.report, r.dump(2) + "\n");
}

struct ModelFlags {
  std::string model;
  std::string out;
};

void CmdBiasEval(const RunConfig& cfg, const ModelFlags& f, std::ostream& out,
                 std::ostream& err) {
  const Pipeline p(cfg);
  PrintWarnings(p, err);
  const toylm::ModelCheckpoint ckpt = LoadModel(p, f.model);
  const auto words = p.Words(cfg.Get("split"));
  const auto templates = p.EvalTemplates(ckpt);
  const auto obs = biaseval::CollectObservations(ckpt, words, templates);
  const biaseval::BiasRegressionFit fit = biaseval::FitBiasRegression(obs);

  Json r = Header("bias-eval", cfg);
  r["model"] = f.model;
  r["split"] = cfg.Get("split");
  r["professions"] = WordsJson(words);
  r["templates"] = TemplatesJson(templates);
  r["fit"] = FitJson(fit);
  Json rows = Json::array();
  for (const auto& o : obs) {
    rows.push_back(Json{{"profession", o.profession.word},
                        {"template", o.template_id},
                        {"x_s", o.profession.x_s},
                        {"x_f", o.profession.x_f},
                        {"p_he", o.p_he},
                        {"p_she", o.p_she},
                        {"p_they", o.p_they},
                        {"y", o.y}});
  }
  r["observations"] = std::move(rows);
  Emit(r, f.out, out);
}

struct TraceFlags {
  std::string model;
  std::string out;
  std::string heatmap;
  std::string render;
};

void WriteHeatmaps(const tracer::TraceGrid& grid, const std::string& prefix) {
  for (tracer::Coefficient c : {tracer::Coefficient::kAs, tracer::Coefficient::kAf,
                                tracer::Coefficient::kB0, tracer::Coefficient::kR2}) {
    WriteFileAtomic(prefix + "_" + std::string(tracer::CoefficientName(c)) + ".svg",
                    tracer::RenderHeatmapSvg(grid, c));
  }
}

void CmdTrace(const RunConfig& cfg, const TraceFlags& f, std::ostream& out,
              std::ostream& err) {
  if (!f.render.empty()) {
    if (f.heatmap.empty()) throw UsageError("--render needs --heatmap");
    WriteHeatmaps(tracer::GridFromJson(ReadFile(f.render)), f.heatmap);
    return;
  }
  if (f.model.empty()) throw UsageError("--model is required");
  const tracer::Component component = ComponentOrUsage(cfg.Get("trace.component"));
  const Pipeline p(cfg);
  PrintWarnings(p, err);
  const toylm::ModelCheckpoint ckpt = LoadModel(p, f.model);
  const auto words = p.Words(cfg.Get("split"));
  const auto prompts =
      tracer::MakeTracePrompts(p.vocab(), words, p.EvalTemplates(ckpt));
  const tracer::NoiseConfig noise = p.NoiseConfig(ckpt);
  const tracer::TraceGrid grid =
      tracer::CausalTracer(ckpt).BuildGrid(prompts, noise, component);

  Json r = Header("trace", cfg);
  r["model"] = f.model;
  r["noise"] = Json{{"base_sigma", noise.base_sigma},
                    {"multiplier", noise.multiplier},
                    {"sigma", noise.sigma()},
                    {"samples", noise.samples},
                    {"seed", noise.seed}};
  const Json grid_json = Json::parse(tracer::GridToJson(grid));
  for (const auto& [k, v] : grid_json.items()) r[k] = v;
  Emit(r, f.out, out);
  if (!f.heatmap.empty()) WriteHeatmaps(grid, f.heatmap);
}

struct DamaFlags {
  std::string model;
  std::string out;
  std::string report;
};

// Inputs of one edit that depend on the run seed.
struct EditInputs {
  std::vector<datagen::ProfessionEntry> train;
  std::vector<datagen::ProfessionEntry> test;
  biaseval::Sequences kl_pool;
  biaseval::Sequences held_out;
};

EditInputs MakeEditInputs(const Pipeline& p) {
  EditInputs in;
  in.train = p.Words("train");
  in.test = p.Words("test");
  in.kl_pool = datagen::FillerPrompts(p.TrainingCorpus(),
                                      p.config().GetUint("dama.kl_prompts"));
  in.held_out = p.HeldOutCorpus();
  return in;
}

damaedit::DamaProgress EditProgress(std::ostream& err) {
  return [&err](std::size_t layer, std::size_t done, std::size_t total) {
    if (done % 100 == 0) {
      err << "layer " << layer << " values " << done << "/" << total << "\n";
    }
  };
}

void CmdDama(const RunConfig& cfg, const DamaFlags& f, std::ostream& out,
             std::ostream& err) {
  const Pipeline base(cfg);
  PrintWarnings(base, err);
  const toylm::ModelCheckpoint ckpt = LoadModel(base, f.model);
  const std::uint64_t k = cfg.GetUint("dama.seeds");
  if (k == 0) throw UsageError("--seeds must be at least 1");
  const auto templates = base.EvalTemplates(ckpt);
  const damaedit::EditConfig edit = base.EditConfig();

  Json r = Header("dama", cfg);
  r["model"] = f.model;
  r["templates"] = TemplatesJson(templates);
  Json runs = Json::array();
  std::vector<double> a_s, a_f, b0, ppl_ratio;
  for (std::uint64_t i = 0; i < k; ++i) {
    RunConfig ci = cfg;
    ci.Set("seed", std::to_string(base.seed() + i));
    const Pipeline p(ci);
    const EditInputs in = MakeEditInputs(p);
    const damaedit::DamaResult res =
        damaedit::RunDama(ckpt, in.train, templates, in.kl_pool, edit, EditProgress(err));
    if (i == 0 && !f.out.empty()) toylm::SaveCheckpoint(res.checkpoint, f.out);

    const Json pre = FitOnSplit(ckpt, in.test, templates);
    const Json post = FitOnSplit(res.checkpoint, in.test, templates);
    const double pre_ppl = biaseval::Perplexity(ckpt, in.held_out);
    const double post_ppl = biaseval::Perplexity(res.checkpoint, in.held_out);
    a_s.push_back(post["a_s"].get<double>());
    a_f.push_back(post["a_f"].get<double>());
    b0.push_back(post["b0"].get<double>());
    ppl_ratio.push_back(post_ppl / pre_ppl);
    runs.push_back(Json{{"seed", base.seed() + i},
                        {"train_professions", WordsJson(in.train)},
                        {"test_professions", WordsJson(in.test)},
                        {"pre", pre},
                        {"post", post},
                        {"pre_perplexity", pre_ppl},
                        {"post_perplexity", post_ppl},
                        {"edits", Json::parse(damaedit::EditReportJson(res.edits))}});
    err << "seed " << base.seed() + i << ": a_s " << pre["a_s"].get<double>() << " -> "
        << a_s.back() << ", ppl " << pre_ppl << " -> " << post_ppl << "\n";
  }
  r["runs"] = std::move(runs);
  r["summary"] = Json{{"seeds", k},
                      {"a_s", MeanStd(a_s)},
                      {"a_f", MeanStd(a_f)},
                      {"b0", MeanStd(b0)},
                      {"perplexity_ratio", MeanStd(ppl_ratio)}};
  const std::string report = !f.report.empty() ? f.report
                             : f.out.empty()   ? std::string()
                                               : f.out + ".json";
  Emit(r, report, out);
}

void CmdSweep(const RunConfig& cfg, const ModelFlags& f, std::ostream& out,
              std::ostream& err) {
  const Pipeline p(cfg);
  PrintWarnings(p, err);
  const toylm::ModelCheckpoint ckpt = LoadModel(p, f.model);
  const auto templates = p.EvalTemplates(ckpt);
  const EditInputs in = MakeEditInputs(p);
  const std::size_t n = ckpt.config.n_layers;
  const std::size_t start = cfg.GetUint("sweep.start_layer");

  Json r = Header("sweep", cfg);
  r["model"] = f.model;
  r["pre"] = FitOnSplit(ckpt, in.test, templates);
  r["pre_perplexity"] = biaseval::Perplexity(ckpt, in.held_out);
  Json rows = Json::array();
  for (std::size_t count : cfg.GetUintList("sweep.layer_counts")) {
    for (std::size_t d_n : cfg.GetUintList("sweep.d_n")) {
      damaedit::EditConfig edit = p.EditConfig();
      // Mid-layer percentages floor to exactly [start, start + count).
      const double nd = static_cast<double>(n);
      edit.layer_lo_pct = 100.0 * (static_cast<double>(start) + 0.5) / nd;
      edit.layer_hi_pct =
          std::min(100.0, 100.0 * (static_cast<double>(start + count) + 0.5) / nd);
      edit.d_n = d_n;
      const damaedit::DamaResult res = damaedit::RunDama(
          ckpt, in.train, templates, in.kl_pool, edit, EditProgress(err));
      Json layers = Json::array();
      for (const auto& e : res.edits) layers.push_back(e.layer);
      rows.push_back(Json{{"layers", std::move(layers)},
                          {"d_n", d_n},
                          {"post", FitOnSplit(res.checkpoint, in.test, templates)},
                          {"post_perplexity", biaseval::Perplexity(res.checkpoint, in.held_out)},
                          {"edits", Json::parse(damaedit::EditReportJson(res.edits))}});
      err << "layers " << count << " d_n " << d_n << " done\n";
    }
  }
  r["rows"] = std::move(rows);
  Emit(r, f.out, out);
}

void CmdEvalSuite(const RunConfig& cfg, const ModelFlags& f, std::ostream& out,
                  std::ostream& err) {
  const Pipeline p(cfg);
  PrintWarnings(p, err);
  const toylm::ModelCheckpoint ckpt = LoadModel(p, f.model);
  const auto templates = p.EvalTemplates(ckpt);
  const biaseval::CorefReport coref =
      biaseval::EvalCoref(ckpt, biaseval::MakeCorefItems(p.vocab(), p.lexicon()));
  const biaseval::StereoReport stereo = biaseval::EvalStereoset(
      ckpt, biaseval::MakeStereoItems(p.vocab(), p.lexicon(), templates));

  Json r = Header("eval-suite", cfg);
  r["model"] = f.model;
  r["bias"] = Json{{"split", cfg.Get("split")},
                   {"templates", TemplatesJson(templates)},
                   {"fit", FitOnSplit(ckpt, p.Words(cfg.Get("split")), templates)}};
  r["coref"] = Json{{"acc", coref.acc},
                    {"delta_s", coref.delta_s},
                    {"delta_g", coref.delta_g},
                    {"acc_pro", coref.acc_pro},
                    {"acc_anti", coref.acc_anti},
                    {"acc_male", coref.acc_male},
                    {"acc_female", coref.acc_female},
                    {"n_pro", coref.n_pro},
                    {"n_anti", coref.n_anti}};
  r["stereoset"] = Json{{"lms", stereo.lms}, {"ss", stereo.ss}, {"icat", stereo.icat},
                        {"n", stereo.n}};
  r["perplexity"] = PerplexityJson(p, ckpt);
  Emit(r, f.out, out);
}

void CmdPerplexity(const RunConfig& cfg, const ModelFlags& f, std::ostream& out,
                   std::ostream& err) {
  const Pipeline p(cfg);
  PrintWarnings(p, err);
  const toylm::ModelCheckpoint ckpt = LoadModel(p, f.model);
  Json r = Header("perplexity", cfg);
  r["model"] = f.model;
  r["perplexity"] = PerplexityJson(p, ckpt);
  Emit(r, f.out, out);
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bias localization, causal tracing and projection editing on a toy "
               "language model.", "dama"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags common;
  TrainFlags train_f;
  ModelFlags model_f;
  TraceFlags trace_f;
  DamaFlags dama_f;
  std::optional<std::string> split, component;
  std::optional<std::uint64_t> noise_samples, seeds, d_n;

  CLI::App* train = app.add_subcommand("train", "generate the corpus and train a model");
  AddCommonFlags(train, common);
  train->add_option("--out", train_f.out, "checkpoint path")->required();
  train->add_option("--report", train_f.report, "report path (default <out>.json)");
  train->add_option("--corpus-out", train_f.corpus_out, "write the training corpus");

  const auto split_check = CLI::IsMember({"train", "test", "all"});
  auto add_model = [&](CLI::App* cmd) {
    AddCommonFlags(cmd, common);
    cmd->add_option("--model", model_f.model, "checkpoint path")->required();
    cmd->add_option("--out", model_f.out, "report path (default stdout)");
  };

  CLI::App* bias = app.add_subcommand("bias-eval", "fit the bias regression");
  add_model(bias);
  bias->add_option("--split", split, "train, test or all")->check(split_check);

  CLI::App* trace = app.add_subcommand("trace", "causal tracing grid and heatmaps");
  AddCommonFlags(trace, common);
  trace->add_option("--model", trace_f.model, "checkpoint path");
  trace->add_option("--out", trace_f.out, "grid report path (default stdout)");
  trace->add_option("--component", component, "mlp, attn or layer");
  trace->add_option("--split", split, "train, test or all")->check(split_check);
  trace->add_option("--noise-samples", noise_samples, "noise draws per prompt");
  trace->add_option("--heatmap", trace_f.heatmap, "SVG path prefix, one per coefficient");
  trace->add_option("--render", trace_f.render, "re-render heatmaps from a saved grid");

  CLI::App* dama = app.add_subcommand("dama", "project the bias subspace out of W_out");
  AddCommonFlags(dama, common);
  dama->add_option("--model", dama_f.model, "checkpoint path")->required();
  dama->add_option("--out", dama_f.out, "edited checkpoint path");
  dama->add_option("--report", dama_f.report, "report path (default <out>.json)");
  dama->add_option("--seeds", seeds, "number of seed replications");
  dama->add_option("--d-n", d_n, "bias subspace dimension");

  CLI::App* sweep = app.add_subcommand("sweep", "edit over layer counts and d_n");
  add_model(sweep);
  CLI::App* suite = app.add_subcommand("eval-suite", "bias, coref, stereoset, perplexity");
  add_model(suite);
  CLI::App* ppl = app.add_subcommand("perplexity", "held-out and unigram perplexity");
  add_model(ppl);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = ResolveConfig(common);
    Override(cfg, "split", split);
    Override(cfg, "trace.component", component);
    Override(cfg, "noise.samples", noise_samples);
    Override(cfg, "dama.seeds", seeds);
    Override(cfg, "dama.d_n", d_n);
    if (train->parsed()) {
      CmdTrain(cfg, train_f, err);
    } else if (bias->parsed()) {
      CmdBiasEval(cfg, model_f, out, err);
    } else if (trace->parsed()) {
      CmdTrace(cfg, trace_f, out, err);
    } else if (dama->parsed()) {
      CmdDama(cfg, dama_f, out, err);
    } else if (sweep->parsed()) {
      CmdSweep(cfg, model_f, out, err);
    } else if (suite->parsed()) {
      CmdEvalSuite(cfg, model_f, out, err);
    } else {
      CmdPerplexity(cfg, model_f, out, err);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace dama::cli
