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

#include "dama/datagen/corpus.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "dama/common/error.h"

namespace dama::datagen {
namespace {

// Draw helpers with fixed semantics so corpora do not depend on the
// standard library's distribution implementations.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double Uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::size_t Index(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  template <typename V>
  const auto& Pick(const V& v) { return v[Index(v.size())]; }

 private:
  std::mt19937_64 rng_;
};

std::uint64_t SentenceSeed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + i + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string Continuation(Draw& draw, const std::string& pronoun) {
  std::string c = draw.Pick(words::Continuations());
  if (pronoun == kThey && c.rfind("was ", 0) == 0) c = "were" + c.substr(3);
  return c;
}

std::string FillerClause(Draw& draw, bool definite) {
  return std::string(definite ? "the " : "a ") + draw.Pick(words::FillerNouns()) +
         " " + draw.Pick(words::FillerVerbs()) + " " +
         draw.Pick(words::FillerAdjectives());
}

}  // namespace

void CorpusSpec::Validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(stereotype_strength) || !unit(factual_strength)) {
    throw Error(ErrorCode::kInvalidArgument, "strengths must lie in [0, 1]");
  }
  if (!unit(they_fraction) || !unit(filler_fraction) || !unit(coref_fraction) ||
      filler_fraction + coref_fraction > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid sentence mix fractions");
  }
  if (n_sentences == 0) {
    throw Error(ErrorCode::kInvalidArgument, "n_sentences must be >= 1");
  }
}

double HeProbability(const CorpusSpec& spec, const ProfessionEntry& entry,
                     double template_skew) {
  const double p = 0.5 +
                   0.5 * (spec.stereotype_strength * entry.x_s +
                          spec.factual_strength * entry.x_f) +
                   template_skew;
  return std::clamp(p, 0.02, 0.98);
}

std::vector<std::vector<TokenId>> Corpus::Sequences() const {
  std::vector<std::vector<TokenId>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.tokens);
  return out;
}

Corpus GenerateCorpus(const CorpusSpec& spec,
                      const std::vector<ProfessionEntry>& lexicon,
                      const std::vector<PromptTemplate>& templates,
                      const Vocabulary& vocab) {
  spec.Validate();
  if (lexicon.size() < 2) {
    throw Error(ErrorCode::kEmptyLexicon, "corpus needs at least two professions");
  }
  if (templates.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "corpus needs templates");
  }
  std::vector<std::string> verbs = words::SubjectVerbs();
  for (const auto* g : {&words::ObjectVerbs(), &words::AmbiguousVerbs()}) {
    verbs.insert(verbs.end(), g->begin(), g->end());
  }
  auto is_in = [](const std::vector<std::string>& v, const std::string& w) {
    return std::find(v.begin(), v.end(), w) != v.end();
  };

  Corpus corpus;
  corpus.sentences.reserve(spec.n_sentences);
  for (std::size_t i = 0; i < spec.n_sentences; ++i) {
    Draw draw(SentenceSeed(spec.seed, i));
    const double kind = draw.Uniform();
    Sentence s;
    std::string text;
    if (kind < spec.filler_fraction) {
      s.kind = SentenceKind::kFiller;
      const std::size_t form = draw.Index(3);
      if (form == 0) {
        text = FillerClause(draw, true) + " .";
      } else if (form == 1) {
        text = FillerClause(draw, false) + " .";
      } else {
        text = FillerClause(draw, true) + " and " + FillerClause(draw, true) +
               " .";
      }
    } else if (kind < spec.filler_fraction + spec.coref_fraction) {
      s.kind = SentenceKind::kCoreference;
      const std::size_t a = draw.Index(lexicon.size());
      std::size_t b = draw.Index(lexicon.size() - 1);
      if (b >= a) ++b;
      const std::string& verb = draw.Pick(verbs);
      bool subject_gold = true;
      if (is_in(words::ObjectVerbs(), verb)) {
        subject_gold = false;
      } else if (is_in(words::AmbiguousVerbs(), verb)) {
        subject_gold = draw.Uniform() < 0.5;
      }
      const ProfessionEntry& gold = subject_gold ? lexicon[a] : lexicon[b];
      s.pronoun = draw.Uniform() < HeProbability(spec, gold, 0.0) ? kHe : kShe;
      s.profession = gold.word;
      text = "the " + lexicon[a].word + " " + verb + " the " + lexicon[b].word +
             " because " + s.pronoun + " " + Continuation(draw, s.pronoun) +
             " . " + s.pronoun + " refers to the " + gold.word;
    } else {
      s.kind = SentenceKind::kProfession;
      const ProfessionEntry& e = draw.Pick(lexicon);
      const PromptTemplate& tpl = draw.Pick(templates);
      const double u = draw.Uniform();
      if (u < spec.they_fraction) {
        s.pronoun = kThey;
      } else {
        const double v = draw.Uniform();
        s.pronoun = v < HeProbability(spec, e, tpl.male_skew) ? kHe : kShe;
      }
      s.profession = e.word;
      s.template_id = tpl.id;
      std::string body = tpl.text;
      body.replace(body.find(kSlot), kSlot.size(), e.word);
      text = body + " " + s.pronoun + " " + Continuation(draw, s.pronoun) + " .";
    }
    s.tokens.push_back(vocab.Id(kBos));
    for (TokenId t : vocab.Encode(text)) s.tokens.push_back(t);
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

std::vector<std::vector<TokenId>> FillerPrompts(const Corpus& corpus,
                                                std::size_t count) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& s : corpus.sentences) {
    if (out.size() >= count) break;
    if (s.kind != SentenceKind::kFiller || s.tokens.size() < 3) continue;
    out.emplace_back(s.tokens.begin(), s.tokens.end() - 1);
  }
  return out;
}

std::string FormatCorpus(const Corpus& corpus, const Vocabulary& vocab) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    out += vocab.Decode(s.tokens);
    out += '\n';
  }
  return out;
}

std::vector<std::vector<TokenId>> ParseCorpusText(const std::string& text,
                                                  const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(vocab.Encode(line));
  }
  return out;
}

}  // namespace dama::datagen
