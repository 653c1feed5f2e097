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

#ifndef DAMA_BIASEVAL_REGRESSION_H_
#define DAMA_BIASEVAL_REGRESSION_H_

#include <string>
#include <vector>

#include "dama/datagen/lexicon.h"
#include "dama/datagen/templates.h"
#include "dama/toylm/checkpoint.h"

namespace dama::biaseval {

struct BiasObservation {
  datagen::ProfessionEntry profession;
  std::string template_id;
  double y = 0.0;  // p_he - p_she
  double p_he = 0.0;
  double p_she = 0.0;
  double p_they = 0.0;
};

// One observation per (profession, template), read from the next-token
// distribution at the end of the prompt.
std::vector<BiasObservation> CollectObservations(
    const toylm::ModelCheckpoint& ckpt,
    const std::vector<datagen::ProfessionEntry>& professions,
    const std::vector<datagen::PromptTemplate>& templates);

// y = a_s * x_s + a_f * x_f + b0.
struct BiasRegressionFit {
  double a_s = 0.0;
  double a_f = 0.0;
  double b0 = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};

inline constexpr double kMaxDesignCondition = 1e10;

// Ordinary least squares on (x_s, x_f, 1). Raises kDegenerateDesign for
// fewer than three points or a design condition number >= 1e10. R^2 is
// 1 - SS_res / SS_tot, and 1 when y is constant and fitted exactly.
BiasRegressionFit FitBiasRegression(const std::vector<double>& x_s,
                                    const std::vector<double>& x_f,
                                    const std::vector<double>& y);
BiasRegressionFit FitBiasRegression(
    const std::vector<BiasObservation>& observations);

}  // namespace dama::biaseval

#endif  // DAMA_BIASEVAL_REGRESSION_H_
