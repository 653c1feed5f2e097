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

#include "dama/biaseval/regression.h"

#include <array>
#include <cmath>

#include "dama/common/error.h"
#include "dama/datagen/vocabulary.h"
#include "dama/linalg/solvers.h"
#include "dama/toylm/transformer.h"

namespace dama::biaseval {
namespace {

// Householder QR least squares for the n x 3 design [x_s, x_f, 1].
std::array<double, 3> LeastSquares3(const std::vector<double>& x_s,
                                    const std::vector<double>& x_f,
                                    const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<std::array<double, 3>> a(n);
  std::vector<double> b = y;
  for (std::size_t i = 0; i < n; ++i) a[i] = {x_s[i], x_f[i], 1.0};
  for (std::size_t k = 0; k < 3; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += a[i][k] * a[i][k];
    norm = std::sqrt(norm);
    const double alpha = a[k][k] > 0 ? -norm : norm;
    std::vector<double> v(n, 0.0);
    for (std::size_t i = k; i < n; ++i) v[i] = a[i][k];
    v[k] -= alpha;
    double vv = 0.0;
    for (std::size_t i = k; i < n; ++i) vv += v[i] * v[i];
    if (vv == 0.0) continue;
    for (std::size_t j = k; j < 3; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < n; ++i) dot += v[i] * a[i][j];
      const double f = 2.0 * dot / vv;
      for (std::size_t i = k; i < n; ++i) a[i][j] -= f * v[i];
    }
    double dot = 0.0;
    for (std::size_t i = k; i < n; ++i) dot += v[i] * b[i];
    const double f = 2.0 * dot / vv;
    for (std::size_t i = k; i < n; ++i) b[i] -= f * v[i];
  }
  std::array<double, 3> x{};
  for (std::size_t k = 3; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < 3; ++j) s -= a[k][j] * x[j];
    x[k] = s / a[k][k];
  }
  return x;
}

}  // namespace

std::vector<BiasObservation> CollectObservations(
    const toylm::ModelCheckpoint& ckpt,
    const std::vector<datagen::ProfessionEntry>& professions,
    const std::vector<datagen::PromptTemplate>& templates) {
  const datagen::Vocabulary vocab(ckpt.vocab);
  const auto he = static_cast<std::size_t>(vocab.Id(datagen::kHe));
  const auto she = static_cast<std::size_t>(vocab.Id(datagen::kShe));
  const auto they = static_cast<std::size_t>(vocab.Id(datagen::kThey));
  std::vector<datagen::EncodedPrompt> prompts;
  std::vector<BiasObservation> out;
  for (const auto& e : professions) {
    for (const auto& t : templates) {
      prompts.push_back(datagen::EncodePrompt(vocab, t, e.word));
      out.push_back({e, t.id, 0.0, 0.0, 0.0, 0.0});
    }
  }
  std::vector<toylm::SequenceRequest> reqs;
  for (const auto& p : prompts) reqs.push_back({p.tokens, {}});
  const toylm::Transformer<float> model(ckpt);
  const auto results = model.ForwardBatch(reqs);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& p = results[i].distributions.back().probabilities;
    out[i].p_he = p[he];
    out[i].p_she = p[she];
    out[i].p_they = p[they];
    out[i].y = p[he] - p[she];
  }
  return out;
}

BiasRegressionFit FitBiasRegression(const std::vector<double>& x_s,
                                    const std::vector<double>& x_f,
                                    const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (x_s.size() != n || x_f.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "regression inputs differ in length");
  }
  if (n < 3) {
    throw Error(ErrorCode::kDegenerateDesign,
                "regression needs at least three observations");
  }
  linalg::MatrixD design(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    design(0, i) = x_s[i];
    design(1, i) = x_f[i];
    design(2, i) = 1.0;
  }
  // cond(X) is the square root of cond(X^T X).
  const auto eig = linalg::EigenSymmetric(linalg::MultiplyTransposed(design, design));
  const double lo = eig.values.front(), hi = eig.values.back();
  if (!(lo > 0.0) || std::sqrt(hi / lo) >= kMaxDesignCondition) {
    throw Error(ErrorCode::kDegenerateDesign,
                "bias regression design is degenerate");
  }
  const std::array<double, 3> coef = LeastSquares3(x_s, x_f, y);
  BiasRegressionFit fit;
  fit.a_s = coef[0];
  fit.a_f = coef[1];
  fit.b0 = coef[2];
  fit.n = n;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = fit.a_s * x_s[i] + fit.a_f * x_f[i] + fit.b0;
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

BiasRegressionFit FitBiasRegression(
    const std::vector<BiasObservation>& observations) {
  std::vector<double> xs, xf, y;
  for (const auto& o : observations) {
    xs.push_back(o.profession.x_s);
    xf.push_back(o.profession.x_f);
    y.push_back(o.y);
  }
  return FitBiasRegression(xs, xf, y);
}

}  // namespace dama::biaseval
