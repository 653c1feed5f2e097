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

#ifndef DAMA_LINALG_PROJECTION_H_
#define DAMA_LINALG_PROJECTION_H_

#include <cstddef>

#include "dama/linalg/matrix.h"

namespace dama::linalg {

// Orthogonal projection onto the complement of the guarded subspace C.
// `matrix` is I - P_c (it annihilates `basis`); `basis` holds d_n columns
// spanning C. An empty basis gives the identity.
struct Projection {
  MatrixD matrix;
  MatrixD basis;

  std::size_t dim() const { return matrix.rows(); }
  // P_c = I - matrix, the projection onto C itself.
  MatrixD OntoGuarded() const;
  // Rounded trace; exact for an idempotent matrix.
  std::size_t rank() const;
};

// P = I - B (B^T B)^{-1} B^T. Raises kSingularGram when the basis columns are
// numerically dependent.
Projection ProjectionFromBasis(const MatrixD& basis);

// ||P P - P||_F.
double IdempotenceDefect(const MatrixD& p);

}  // namespace dama::linalg

#endif  // DAMA_LINALG_PROJECTION_H_
