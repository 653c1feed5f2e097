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

#ifndef DAMA_SRC_TOYLM_KERNELS_H_
#define DAMA_SRC_TOYLM_KERNELS_H_

#include <cstddef>

namespace dama::toylm::kernels {

// Dense kernels in "axpy" order: every output element accumulates its terms in
// ascending index order, independent of how many rows are processed together.
// This keeps a row's result bit-identical across batch sizes.

// C[m x n] (=, or += when accumulate) A[m x k] * B[k x n].
template <typename T>
void MatMul(std::size_t m, std::size_t n, std::size_t k, const T* a,
            const T* b, T* c, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = T(0);
    }
    const T* a0 = a + i * k;
    const T* a1 = a0 + k;
    const T* a2 = a1 + k;
    const T* a3 = a2 + k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* __restrict bp = b + p * n;
      const T x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = bp[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict c0 = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) c0[j] = T(0);
    }
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* __restrict bp = b + p * n;
      const T x0 = a0[p];
      for (std::size_t j = 0; j < n; ++j) c0[j] += x0 * bp[j];
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n], rows of A/B consumed in order.
template <typename T>
void MatMulTransAAccumulate(std::size_t m, std::size_t n, std::size_t k,
                            const T* a, const T* b, T* c) {
  for (std::size_t r = 0; r < m; ++r) {
    const T* ar = a + r * k;
    const T* __restrict br = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T x = ar[p];
      if (x == T(0)) continue;
      T* __restrict cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += x * br[j];
    }
  }
}

template <typename T>
T Dot(const T* a, const T* b, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace dama::toylm::kernels

#endif  // DAMA_SRC_TOYLM_KERNELS_H_
