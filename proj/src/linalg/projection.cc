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

#include "dama/linalg/projection.h"

#include <cmath>

#include "dama/linalg/solvers.h"

namespace dama::linalg {

MatrixD Projection::OntoGuarded() const {
  return Subtract(MatrixD::Identity(dim()), matrix);
}

std::size_t Projection::rank() const {
  return static_cast<std::size_t>(std::llround(Trace(matrix)));
}

Projection ProjectionFromBasis(const MatrixD& basis) {
  const std::size_t d = basis.rows();
  if (d == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "projection: empty space");
  }
  if (basis.cols() == 0) return {MatrixD::Identity(d), basis};
  if (basis.cols() > d) {
    throw Error(ErrorCode::kSingularGram, "more basis columns than dimensions");
  }
  const MatrixD bt = Transpose(basis);
  const GramFactor gram(Multiply(bt, basis));
  // B (B^T B)^{-1} B^T, symmetrized to remove rounding asymmetry.
  MatrixD onto = Multiply(basis, gram.Solve(bt));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double s = 0.5 * (onto(i, j) + onto(j, i));
      onto(i, j) = s;
      onto(j, i) = s;
    }
  }
  return {Subtract(MatrixD::Identity(d), onto), basis};
}

double IdempotenceDefect(const MatrixD& p) {
  return FrobeniusNorm(Subtract(Multiply(p, p), p));
}

}  // namespace dama::linalg
