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

#ifndef DAMA_LINALG_PLS_H_
#define DAMA_LINALG_PLS_H_

#include <cstddef>
#include <vector>

#include "dama/linalg/matrix.h"

namespace dama::linalg {

inline constexpr double kPlsTolerance = 1e-10;
inline constexpr int kPlsMaxIterations = 500;

// NIPALS PLS2 fit with samples as columns. Both blocks are mean-centered;
// only the predictor block is deflated between components.
struct PlsFit {
  // Predictor weights, features x n_components. Columns are orthonormal and
  // span the directions of the predictor block most covariant with targets.
  MatrixD b1;
  // Offset so that predictions are coef * x + b0 (targets x 1).
  MatrixD b0;
  // Regression matrix implied by the retained components (targets x features).
  MatrixD coef;
  MatrixD x_loadings;  // features x n_components
  MatrixD y_loadings;  // targets x n_components
  std::size_t n_components = 0;
  std::vector<bool> converged;
  std::vector<int> iterations;

  MatrixD Predict(const MatrixD& x) const;
};

// x is features x n, y is targets x n.
PlsFit FitPls(const MatrixD& x, const MatrixD& y, std::size_t n_components);

}  // namespace dama::linalg

#endif  // DAMA_LINALG_PLS_H_
