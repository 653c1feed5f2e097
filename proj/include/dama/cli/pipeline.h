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

#ifndef DAMA_CLI_PIPELINE_H_
#define DAMA_CLI_PIPELINE_H_

#include <string>
#include <string_view>
#include <vector>

#include "dama/biaseval/perplexity.h"
#include "dama/cli/config.h"
#include "dama/damaedit/dama.h"
#include "dama/datagen/corpus.h"
#include "dama/datagen/lexicon.h"
#include "dama/datagen/templates.h"
#include "dama/toylm/train.h"
#include "dama/tracer/tracer.h"

namespace dama::cli {

// Typed view of a RunConfig: the lexicon, vocabulary, corpora, split and
// module configs that every command derives the same way.
class Pipeline {
 public:
  // Loads the lexicon (bundled when `professions` is empty).
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<datagen::ProfessionEntry>& lexicon() const { return lexicon_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const datagen::Vocabulary& vocab() const { return vocab_; }

  datagen::CorpusSpec CorpusSpec() const;
  datagen::Corpus TrainingCorpus() const;
  biaseval::Sequences HeldOutCorpus() const;
  toylm::ModelConfig ModelConfig() const;
  toylm::TrainConfig TrainConfig() const;

  datagen::SplitSpec Split() const;
  // "train", "test" or "all"; raises kInvalidArgument otherwise.
  std::vector<datagen::ProfessionEntry> Words(std::string_view split) const;
  // Filtered on the checkpoint when templates.filter is set, otherwise the
  // standard ten. Raises kInvalidArgument when the filter keeps nothing.
  std::vector<datagen::PromptTemplate> EvalTemplates(
      const toylm::ModelCheckpoint& ckpt) const;

  damaedit::EditConfig EditConfig() const;
  // Calibrated on the checkpoint's profession embeddings.
  tracer::NoiseConfig NoiseConfig(const toylm::ModelCheckpoint& ckpt) const;

  // Raises kInvalidArgument when the checkpoint was built over a different
  // vocabulary.
  void CheckModel(const toylm::ModelCheckpoint& ckpt) const;

 private:
  RunConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<datagen::ProfessionEntry> lexicon_;
  std::vector<std::string> warnings_;
  datagen::Vocabulary vocab_;
};

}  // namespace dama::cli

#endif  // DAMA_CLI_PIPELINE_H_
