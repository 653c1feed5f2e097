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

#ifndef DAMA_LINALG_SOLVERS_H_
#define DAMA_LINALG_SOLVERS_H_

#include <vector>

#include "dama/linalg/matrix.h"

namespace dama::linalg {

// Gram matrices whose eigenvalue ratio reaches this bound are singular.
inline constexpr double kMaxGramCondition = 1e12;

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  MatrixD vectors;             // column j pairs with values[j]
};

// Cyclic Jacobi rotations; intended for the small (<= a few hundred) Gram
// matrices this toolkit produces.
SymmetricEigen EigenSymmetric(const MatrixD& a);

// Cholesky factor L (lower) of a symmetric positive definite Gram matrix.
// The condition number is checked on the eigenvalues first; the factorization
// then retries with diagonal jitter 1e-12 * trace / d, growing x10 up to
// 1e-6 * trace / d, to absorb rounding on near-collinear inputs.
class GramFactor {
 public:
  explicit GramFactor(const MatrixD& gram);

  // Solves G x = b for every column of b.
  MatrixD Solve(const MatrixD& b) const;
  MatrixD Inverse() const;
  double jitter() const { return jitter_; }
  double condition() const { return condition_; }

 private:
  MatrixD lower_;
  double jitter_ = 0.0;
  double condition_ = 0.0;
};

// W = V U^T (U U^T)^{-1}, the minimizer of ||W U - V||_F^2. U is i x n with
// samples as columns, V is o x n.
MatrixD SolveOls(const MatrixD& u, const MatrixD& v);

struct Projection;

// Least squares subject to W u_k orthogonal to the guarded subspace C for every
// key column: W = (I - P_c) V U^T (U U^T)^{-1}. The result maps every input
// into the orthogonal complement of C, not only the training keys.
MatrixD SolveConstrainedOls(const MatrixD& u, const MatrixD& v,
                            const Projection& guard);

}  // namespace dama::linalg

#endif  // DAMA_LINALG_SOLVERS_H_
