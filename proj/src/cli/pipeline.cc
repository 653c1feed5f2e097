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

#include "dama/cli/pipeline.h"

#include "dama/common/error.h"

namespace dama::cli {

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
  seed_ = config_.GetUint("seed");
  const std::string& path = config_.Get("professions");
  datagen::LexiconResult lex = path.empty()
                                   ? datagen::BuildLexicon(datagen::DefaultProfessionsJson())
                                   : datagen::LoadLexicon(path);
  if (lex.entries.empty()) {
    throw Error(ErrorCode::kEmptyLexicon, "no usable professions in '" + path + "'");
  }
  lexicon_ = std::move(lex.entries);
  warnings_ = std::move(lex.warnings);
  vocab_ = datagen::BuildVocabulary(lexicon_);
}

datagen::CorpusSpec Pipeline::CorpusSpec() const {
  datagen::CorpusSpec s;
  s.stereotype_strength = config_.GetDouble("corpus.stereotype_strength");
  s.factual_strength = config_.GetDouble("corpus.factual_strength");
  s.n_sentences = config_.GetUint("corpus.n_sentences");
  s.they_fraction = config_.GetDouble("corpus.they_fraction");
  s.filler_fraction = config_.GetDouble("corpus.filler_fraction");
  s.coref_fraction = config_.GetDouble("corpus.coref_fraction");
  s.seed = DeriveSeed(seed_, SeedStream::kCorpus);
  s.Validate();
  return s;
}

datagen::Corpus Pipeline::TrainingCorpus() const {
  return datagen::GenerateCorpus(CorpusSpec(), lexicon_, datagen::AllTemplates(),
                                 vocab_);
}

biaseval::Sequences Pipeline::HeldOutCorpus() const {
  datagen::CorpusSpec s = CorpusSpec();
  s.n_sentences = config_.GetUint("heldout.n_sentences");
  s.seed = DeriveSeed(seed_, SeedStream::kHeldOut);
  return datagen::GenerateCorpus(s, lexicon_, datagen::AllTemplates(), vocab_)
      .Sequences();
}

toylm::ModelConfig Pipeline::ModelConfig() const {
  toylm::ModelConfig m;
  m.vocab_size = vocab_.size();
  m.d_model = config_.GetUint("model.d_model");
  m.d_ff = config_.GetUint("model.d_ff");
  m.n_layers = config_.GetUint("model.n_layers");
  m.n_heads = config_.GetUint("model.n_heads");
  m.max_seq = config_.GetUint("model.max_seq");
  m.seed = DeriveSeed(seed_, SeedStream::kModelInit);
  m.Validate();
  return m;
}

toylm::TrainConfig Pipeline::TrainConfig() const {
  toylm::TrainConfig t;
  t.steps = config_.GetUint("train.steps");
  t.lr = config_.GetDouble("train.lr");
  t.batch_size = config_.GetUint("train.batch_size");
  t.warmup_steps = config_.GetUint("train.warmup_steps");
  t.min_lr_ratio = config_.GetDouble("train.min_lr_ratio");
  t.grad_clip = config_.GetDouble("train.grad_clip");
  t.seed = DeriveSeed(seed_, SeedStream::kTraining);
  return t;
}

datagen::SplitSpec Pipeline::Split() const {
  return datagen::MakeSplit(lexicon_, config_.GetDouble("split.fraction"),
                            DeriveSeed(seed_, SeedStream::kSplit));
}

std::vector<datagen::ProfessionEntry> Pipeline::Words(std::string_view split) const {
  if (split == "all") return lexicon_;
  const datagen::SplitSpec s = Split();
  if (split == "test") return datagen::SelectWords(lexicon_, s.test_words);
  if (split == "train") return datagen::SelectWords(lexicon_, s.train_words);
  throw Error(ErrorCode::kInvalidArgument,
              "split must be train, test or all, got '" + std::string(split) + "'");
}

std::vector<datagen::PromptTemplate> Pipeline::EvalTemplates(
    const toylm::ModelCheckpoint& ckpt) const {
  if (!config_.GetBool("templates.filter")) return datagen::StandardTemplates();
  auto kept = datagen::FilterTemplates(datagen::AllTemplates(), ckpt, lexicon_,
                                       config_.GetDouble("templates.threshold"));
  if (kept.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "template filter kept no template; raise templates.threshold or "
                "set templates.filter=false");
  }
  return kept;
}

damaedit::EditConfig Pipeline::EditConfig() const {
  damaedit::EditConfig e;
  e.layer_lo_pct = config_.GetDouble("dama.layer_lo_pct");
  e.layer_hi_pct = config_.GetDouble("dama.layer_hi_pct");
  if (!config_.Get("dama.d_n").empty()) e.d_n = config_.GetUint("dama.d_n");
  const std::string& target = config_.Get("dama.pls_target");
  if (target == "contrast") {
    e.pls_target = damaedit::PlsTarget::kPronounContrast;
  } else if (target == "stacked") {
    e.pls_target = damaedit::PlsTarget::kStackedValues;
  } else {
    throw Error(ErrorCode::kInvalidArgument,
                "dama.pls_target must be contrast or stacked");
  }
  e.value_opt.steps = config_.GetUint("value.steps");
  e.value_opt.lr = config_.GetDouble("value.lr");
  e.value_opt.lambda1 = config_.GetDouble("value.lambda1");
  e.value_opt.lambda2 = config_.GetDouble("value.lambda2");
  e.value_opt.kl_prompt_count = config_.GetUint("dama.kl_prompts");
  return e;
}

tracer::NoiseConfig Pipeline::NoiseConfig(const toylm::ModelCheckpoint& ckpt) const {
  tracer::NoiseConfig n = tracer::CalibrateNoise(ckpt, lexicon_);
  n.multiplier = config_.GetDouble("noise.multiplier");
  n.samples = config_.GetUint("noise.samples");
  n.seed = DeriveSeed(seed_, SeedStream::kNoise);
  n.Validate();
  return n;
}

void Pipeline::CheckModel(const toylm::ModelCheckpoint& ckpt) const {
  if (ckpt.vocab != vocab_.words()) {
    throw Error(ErrorCode::kInvalidArgument,
                "checkpoint vocabulary does not match the lexicon");
  }
}

}  // namespace dama::cli
