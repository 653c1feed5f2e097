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

#include "dama/linalg/pls.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "dama/linalg/solvers.h"

namespace dama::linalg {
namespace {

// Centers every row (feature) over the samples; returns the row means.
std::vector<double> CenterRows(MatrixD& m) {
  std::vector<double> mean(m.rows(), 0.0);
  const double n = static_cast<double>(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double s = 0.0;
    for (double x : row) s += x;
    mean[r] = s / n;
    for (double& x : row) x -= mean[r];
  }
  return mean;
}

// m^T a for a vector a of length m.rows().
std::vector<double> TransposeTimes(const MatrixD& m, std::span<const double> a) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = a[r];
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += ar * row[c];
  }
  return out;
}

}  // namespace

MatrixD PlsFit::Predict(const MatrixD& x) const {
  MatrixD out = Multiply(coef, x);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (double& v : out.row(r)) v += b0(r, 0);
  }
  return out;
}

PlsFit FitPls(const MatrixD& x, const MatrixD& y, std::size_t n_components) {
  if (n_components == 0) {
    throw Error(ErrorCode::kDegenerateInput, "n_components must be >= 1");
  }
  if (x.cols() != y.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "pls: x has " + std::to_string(x.cols()) + " samples, y " +
                    std::to_string(y.cols()));
  }
  const std::size_t n = x.cols();
  const std::size_t features = x.rows();
  const std::size_t targets = y.rows();
  if (n < 2) {
    throw Error(ErrorCode::kDegenerateInput, "pls needs at least 2 samples");
  }
  if (n_components > std::min(features, n)) {
    throw Error(ErrorCode::kDegenerateInput,
                "n_components " + std::to_string(n_components) +
                    " exceeds min(features, samples)");
  }

  MatrixD xc = x;
  MatrixD yc = y;
  const std::vector<double> x_mean = CenterRows(xc);
  const std::vector<double> y_mean = CenterRows(yc);
  const double x_scale = FrobeniusNorm(xc);
  const double y_scale = FrobeniusNorm(yc);
  if (x_scale == 0.0 || y_scale == 0.0) {
    throw Error(ErrorCode::kDegenerateInput,
                x_scale == 0.0 ? "predictor block has zero variance"
                               : "target block has zero variance");
  }

  PlsFit fit;
  fit.n_components = n_components;
  fit.b1 = MatrixD(features, n_components);
  fit.x_loadings = MatrixD(features, n_components);
  fit.y_loadings = MatrixD(targets, n_components);

  for (std::size_t k = 0; k < n_components; ++k) {
    // Start from the target row with the largest variance.
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t r = 0; r < targets; ++r) {
      const double nr = Norm(yc.row(r));
      if (nr > best_norm) {
        best_norm = nr;
        best = r;
      }
    }
    std::vector<double> u(yc.row(best).begin(), yc.row(best).end());
    std::vector<double> w, t, c, t_prev;
    bool converged = false;
    int it = 0;
    for (; it < kPlsMaxIterations; ++it) {
      w = MatVec(xc, u);
      const double wn = Norm(w);
      if (wn <= 1e-13 * x_scale * std::max(Norm(u), 1e-300)) {
        throw Error(ErrorCode::kDegenerateInput,
                    "no remaining covariance for component " +
                        std::to_string(k + 1));
      }
      for (double& v : w) v /= wn;
      t = TransposeTimes(xc, w);
      const double tt = Dot(t, t);
      c = MatVec(yc, t);
      for (double& v : c) v /= tt;
      const double cc = Dot(c, c);
      if (cc == 0.0) {
        throw Error(ErrorCode::kDegenerateInput, "targets orthogonal to scores");
      }
      u = TransposeTimes(yc, c);
      for (double& v : u) v /= cc;
      if (!t_prev.empty()) {
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          diff += (t[i] - t_prev[i]) * (t[i] - t_prev[i]);
        }
        if (std::sqrt(diff) < kPlsTolerance * std::sqrt(tt)) {
          converged = true;
          ++it;
          break;
        }
      }
      t_prev = t;
    }
    const double tt = Dot(t, t);
    std::vector<double> p = MatVec(xc, t);
    for (double& v : p) v /= tt;
    // Deflate the predictor block: xc -= p t^T.
    for (std::size_t r = 0; r < features; ++r) {
      auto row = xc.row(r);
      for (std::size_t i = 0; i < n; ++i) row[i] -= p[r] * t[i];
    }
    fit.b1.set_col(k, w);
    fit.x_loadings.set_col(k, p);
    fit.y_loadings.set_col(k, c);
    fit.converged.push_back(converged);
    fit.iterations.push_back(it);
  }

  // Rotations R = W (P^T W)^{-1}; coef = C R^T.
  const MatrixD ptw = Multiply(Transpose(fit.x_loadings), fit.b1);
  // P^T W is upper triangular with unit diagonal; solve R^T = (P^T W)^{-T} W^T
  // by forward substitution on its transpose.
  const std::size_t m = n_components;
  MatrixD rt(m, features);  // R^T
  const MatrixD wt = Transpose(fit.b1);
  for (std::size_t f = 0; f < features; ++f) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = wt(i, f);
      for (std::size_t j = 0; j < i; ++j) s -= ptw(j, i) * rt(j, f);
      rt(i, f) = s / ptw(i, i);
    }
  }
  fit.coef = Multiply(fit.y_loadings, rt);
  fit.b0 = MatrixD(targets, 1);
  const std::vector<double> shift = MatVec(fit.coef, x_mean);
  for (std::size_t r = 0; r < targets; ++r) fit.b0(r, 0) = y_mean[r] - shift[r];
  return fit;
}

}  // namespace dama::linalg
