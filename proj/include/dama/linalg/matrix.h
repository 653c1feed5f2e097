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

#ifndef DAMA_LINALG_MATRIX_H_
#define DAMA_LINALG_MATRIX_H_

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dama/common/error.h"

namespace dama::linalg {

// Dense row-major matrix. Entries are checked to be finite whenever a matrix
// is built from external data; arithmetic on finite inputs is not re-checked.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "matrix data length " + std::to_string(data_.size()) +
                      " != " + std::to_string(rows_) + "x" +
                      std::to_string(cols_));
    }
    for (const T& x : data_) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kInvalidArgument, "non-finite matrix entry");
      }
    }
  }

  static Matrix Identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  // Builds a matrix from nested rows; every row must have the same length.
  static Matrix FromRows(const std::vector<std::vector<T>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows[0].size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) {
        throw Error(ErrorCode::kDimensionMismatch, "ragged row list");
      }
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<T> col(std::size_t c) const {
    std::vector<T> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }
  void set_col(std::size_t c, std::span<const T> values) {
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using MatrixD = Matrix<double>;
using MatrixF = Matrix<float>;

template <typename To, typename From>
Matrix<To> Cast(const Matrix<From>& m) {
  Matrix<To> out(m.rows(), m.cols());
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  return out;
}

// Basic kernels. Shapes are validated and raise kDimensionMismatch.
MatrixD Multiply(const MatrixD& a, const MatrixD& b);
MatrixD Transpose(const MatrixD& a);
MatrixD Add(const MatrixD& a, const MatrixD& b);
MatrixD Subtract(const MatrixD& a, const MatrixD& b);
MatrixD Scale(const MatrixD& a, double s);
// a * b^T without materializing the transpose.
MatrixD MultiplyTransposed(const MatrixD& a, const MatrixD& b);
// Concatenates blocks left to right; all blocks must share a row count.
MatrixD HorizontalConcat(const std::vector<MatrixD>& blocks);
std::vector<double> MatVec(const MatrixD& a, std::span<const double> x);

double FrobeniusNorm(const MatrixD& a);
double Trace(const MatrixD& a);
double Dot(std::span<const double> a, std::span<const double> b);
double Norm(std::span<const double> a);
// Largest |a_ij - a_ji|.
double SymmetryDefect(const MatrixD& a);

}  // namespace dama::linalg

#endif  // DAMA_LINALG_MATRIX_H_
