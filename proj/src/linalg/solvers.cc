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

#include "dama/linalg/solvers.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dama/linalg/projection.h"

namespace dama::linalg {
namespace {

constexpr int kMaxJacobiSweeps = 100;

bool TryCholesky(const MatrixD& g, double jitter, MatrixD& lower) {
  const std::size_t n = g.rows();
  lower = MatrixD(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = g(j, j) + jitter;
    for (std::size_t k = 0; k < j; ++k) diag -= lower(j, k) * lower(j, k);
    if (!(diag > 0.0)) return false;
    const double ljj = std::sqrt(diag);
    lower(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = g(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / ljj;
    }
  }
  return true;
}

void CheckKeysValues(const MatrixD& u, const MatrixD& v) {
  if (u.cols() != v.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "keys have " + std::to_string(u.cols()) + " samples, values " +
                    std::to_string(v.cols()));
  }
  if (u.rows() == 0 || u.cols() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "empty key matrix");
  }
}

}  // namespace

SymmetricEigen EigenSymmetric(const MatrixD& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "eigen: matrix not square");
  }
  const std::size_t n = a.rows();
  MatrixD m = a;
  MatrixD v = MatrixD::Identity(n);
  const double scale = std::max(FrobeniusNorm(a), 1e-300);
  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    }
    if (std::sqrt(off) <= 1e-17 * scale) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return m(x, x) < m(y, y); });
  SymmetricEigen out{std::vector<double>(n), MatrixD(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = m(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

GramFactor::GramFactor(const MatrixD& gram) {
  if (gram.rows() != gram.cols() || gram.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "gram matrix not square");
  }
  const SymmetricEigen eig = EigenSymmetric(gram);
  const double lo = eig.values.front();
  const double hi = eig.values.back();
  if (!(hi > 0.0) || !(lo > 0.0) || hi / lo >= kMaxGramCondition) {
    throw Error(ErrorCode::kSingularGram,
                "gram eigenvalues in [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
  }
  condition_ = hi / lo;
  const double base = Trace(gram) / static_cast<double>(gram.rows());
  if (TryCholesky(gram, 0.0, lower_)) return;
  for (double rel = 1e-12; rel <= 1e-6 * 1.0000001; rel *= 10.0) {
    if (TryCholesky(gram, rel * base, lower_)) {
      jitter_ = rel * base;
      return;
    }
  }
  throw Error(ErrorCode::kSingularGram, "cholesky failed after jitter");
}

MatrixD GramFactor::Solve(const MatrixD& b) const {
  const std::size_t n = lower_.rows();
  if (b.rows() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "gram solve: rhs rows");
  }
  MatrixD x = b;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= lower_(i, k) * x(k, c);
      x(i, c) = s / lower_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= lower_(k, ii) * x(k, c);
      x(ii, c) = s / lower_(ii, ii);
    }
  }
  return x;
}

MatrixD GramFactor::Inverse() const {
  return Solve(MatrixD::Identity(lower_.rows()));
}

MatrixD SolveOls(const MatrixD& u, const MatrixD& v) {
  CheckKeysValues(u, v);
  if (u.cols() < u.rows()) {
    throw Error(ErrorCode::kSingularGram,
                "fewer samples than key dimensions");
  }
  const GramFactor gram(MultiplyTransposed(u, u));
  // W^T = (U U^T)^{-1} U V^T.
  return Transpose(gram.Solve(MultiplyTransposed(u, v)));
}

MatrixD SolveConstrainedOls(const MatrixD& u, const MatrixD& v,
                            const Projection& guard) {
  CheckKeysValues(u, v);
  if (guard.dim() != v.rows()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "guard dimension " + std::to_string(guard.dim()) +
                    " != value dimension " + std::to_string(v.rows()));
  }
  return Multiply(guard.matrix, SolveOls(u, v));
}

}  // namespace dama::linalg
