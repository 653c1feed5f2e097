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

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "dama/linalg/matrix.h"
#include "dama/linalg/pls.h"
#include "dama/linalg/projection.h"
#include "dama/linalg/solvers.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace dama::linalg {
namespace {

using ::dama::testing::FromEigen;
using ::dama::testing::RandomMatrix;
using ::dama::testing::ToEigen;

double Cost(const MatrixD& w, const MatrixD& u, const MatrixD& v) {
  const double f = FrobeniusNorm(Subtract(Multiply(w, u), v));
  return f * f;
}

TEST(MatrixTest, RejectsNonFiniteAndBadLength) {
  EXPECT_THROW(MatrixD(2, 2, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(MatrixD(1, 2, std::vector<double>{1, NAN}), Error);
  EXPECT_THROW(MatrixD(1, 1, std::vector<double>{INFINITY}), Error);
}

TEST(EigenSymmetricTest, MatchesReferenceSolver) {
  std::mt19937_64 rng(7);
  const MatrixD a = RandomMatrix(9, 9, rng);
  const MatrixD sym = Add(a, Transpose(a));
  const SymmetricEigen ours = EigenSymmetric(sym);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(ToEigen(sym));
  for (int i = 0; i < 9; ++i) {
    EXPECT_NEAR(ours.values[i], ref.eigenvalues()(i), 1e-10);
  }
}

TEST(SolveOlsTest, IdentityKeys) {
  const MatrixD u = MatrixD::Identity(2);
  const MatrixD v = MatrixD::FromRows({{2, 0}, {0, 3}});
  const MatrixD w = SolveOls(u, v);
  EXPECT_NEAR(FrobeniusNorm(Subtract(w, v)), 0.0, 1e-14);
}

TEST(SolveOlsTest, RecoversExactLinearMap) {
  std::mt19937_64 rng(11);
  const MatrixD u = RandomMatrix(3, 8, rng);
  const MatrixD w0 = RandomMatrix(2, 3, rng);
  const MatrixD v = Multiply(w0, u);
  const MatrixD w = SolveOls(u, v);
  EXPECT_LT(FrobeniusNorm(Subtract(w, w0)), 1e-9);
}

TEST(SolveOlsTest, RankDeficientKeysAreSingular) {
  const MatrixD u = MatrixD::FromRows({{1, 1}, {0, 0}});
  const MatrixD v = MatrixD::FromRows({{1, 2}});
  try {
    SolveOls(u, v);
    FAIL() << "expected SingularGram";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularGram);
  }
}

TEST(SolveOlsTest, ShapeMismatch) {
  try {
    SolveOls(MatrixD(2, 5, 1.0), MatrixD(3, 4, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(SolveOlsTest, ResidualIsOrthogonalToKeys) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t i = 1 + rng() % 6, o = 1 + rng() % 6;
    const std::size_t n = i + rng() % 20;
    const MatrixD u = RandomMatrix(i, n, rng);
    const MatrixD v = RandomMatrix(o, n, rng);
    const MatrixD w = SolveOls(u, v);
    const MatrixD residual = Subtract(Multiply(w, u), v);
    EXPECT_LT(FrobeniusNorm(MultiplyTransposed(residual, u)) /
                  FrobeniusNorm(v),
              1e-8);
  }
}

TEST(ConstrainedOlsTest, HandAppliedFormula) {
  // C = span(e1): the e1 component of the OLS map [3, 4]^T is dropped.
  const MatrixD u = MatrixD::FromRows({{1}});
  const MatrixD v = MatrixD::FromRows({{3}, {4}});
  const Projection guard = ProjectionFromBasis(MatrixD::FromRows({{1}, {0}}));
  const MatrixD w = SolveConstrainedOls(u, v, guard);
  EXPECT_NEAR(w(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(w(1, 0), 4.0, 1e-15);
}

TEST(ConstrainedOlsTest, EmptyGuardEqualsOls) {
  std::mt19937_64 rng(5);
  const MatrixD u = RandomMatrix(3, 10, rng);
  const MatrixD v = RandomMatrix(4, 10, rng);
  const Projection none = ProjectionFromBasis(MatrixD(4, 0));
  EXPECT_EQ(none.rank(), 4u);
  EXPECT_LT(FrobeniusNorm(Subtract(SolveConstrainedOls(u, v, none),
                                   SolveOls(u, v))),
            1e-14);
}

TEST(ConstrainedOlsTest, BeatsRandomFeasiblePerturbations) {
  std::mt19937_64 rng(17);
  const MatrixD u = RandomMatrix(4, 20, rng);
  const MatrixD v = RandomMatrix(3, 20, rng);
  const Projection guard = ProjectionFromBasis(RandomMatrix(3, 1, rng));
  const MatrixD w = SolveConstrainedOls(u, v, guard);
  const double best = Cost(w, u, v);
  for (int k = 0; k < 1000; ++k) {
    // (I - P_c) R keeps every perturbed output orthogonal to C.
    const MatrixD d = Multiply(guard.matrix, RandomMatrix(3, 4, rng));
    EXPECT_LE(best, Cost(Add(w, Scale(d, 1e-2)), u, v));
  }
}

TEST(ConstrainedOlsTest, OutputsAvoidGuardedSubspaceForAnyInput) {
  std::mt19937_64 rng(23);
  const MatrixD u = RandomMatrix(5, 30, rng);
  const MatrixD v = RandomMatrix(6, 30, rng);
  const Projection guard = ProjectionFromBasis(RandomMatrix(6, 2, rng));
  const MatrixD w = SolveConstrainedOls(u, v, guard);
  const MatrixD onto = guard.OntoGuarded();
  for (int k = 0; k < 100; ++k) {
    const MatrixD x = RandomMatrix(5, 1, rng);
    const MatrixD wx = Multiply(w, x);
    EXPECT_LT(FrobeniusNorm(Multiply(onto, wx)) / (FrobeniusNorm(wx) + 1e-30),
              1e-8);
  }
}

TEST(ConstrainedOlsTest, PythagoreanSplit) {
  std::mt19937_64 rng(29);
  for (int k = 0; k < 200; ++k) {
    const Projection guard = ProjectionFromBasis(RandomMatrix(5, 2, rng));
    const MatrixD p = guard.OntoGuarded();
    const MatrixD w = Multiply(guard.matrix, RandomMatrix(5, 4, rng));
    const MatrixD u = RandomMatrix(4, 1, rng);
    const MatrixD v = RandomMatrix(5, 1, rng);
    const MatrixD wu = Multiply(w, u);
    const double lhs = std::pow(FrobeniusNorm(Subtract(wu, v)), 2);
    const double rhs =
        std::pow(FrobeniusNorm(Subtract(wu, Multiply(guard.matrix, v))), 2) +
        std::pow(FrobeniusNorm(Multiply(p, v)), 2);
    EXPECT_NEAR(lhs, rhs, 1e-8 * lhs);
  }
}

TEST(ProjectionTest, AxisAligned) {
  const Projection p = ProjectionFromBasis(MatrixD::FromRows({{1}, {0}}));
  EXPECT_EQ(p.matrix, MatrixD::FromRows({{0, 0}, {0, 1}}));
  EXPECT_EQ(p.rank(), 1u);
}

TEST(ProjectionTest, DuplicatedColumnIsSingular) {
  try {
    ProjectionFromBasis(MatrixD::FromRows({{1, 1}, {0, 0}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularGram);
  }
}

TEST(ProjectionTest, RandomBasisRankNullity) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 20; ++k) {
    const MatrixD basis = RandomMatrix(8, 3, rng);
    const Projection p = ProjectionFromBasis(basis);
    EXPECT_NEAR(Trace(p.matrix), 5.0, 1e-6);
    EXPECT_LT(IdempotenceDefect(p.matrix), 1e-8);
    EXPECT_LT(SymmetryDefect(p.matrix), 1e-10);
    EXPECT_LT(FrobeniusNorm(Multiply(p.matrix, basis)), 1e-8);
  }
}

TEST(PlsTest, ZeroComponentsRejected) {
  std::mt19937_64 rng(1);
  try {
    FitPls(RandomMatrix(3, 10, rng), RandomMatrix(2, 10, rng), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

TEST(PlsTest, ZeroVarianceRejected) {
  std::mt19937_64 rng(1);
  try {
    FitPls(MatrixD(3, 10, 2.0), RandomMatrix(2, 10, rng), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

TEST(PlsTest, FirstWeightMatchesCrossCovarianceSvd) {
  std::mt19937_64 rng(41);
  const MatrixD x = RandomMatrix(6, 40, rng);
  const MatrixD y = Add(Multiply(RandomMatrix(3, 6, rng), x),
                        RandomMatrix(3, 40, rng, 0.1));
  const PlsFit fit = FitPls(x, y, 1);
  Eigen::MatrixXd xe = ToEigen(x), ye = ToEigen(y);
  xe = xe.colwise() - xe.rowwise().mean();
  ye = ye.colwise() - ye.rowwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(xe * ye.transpose(),
                                        Eigen::ComputeThinU);
  const Eigen::VectorXd lead = svd.matrixU().col(0);
  double cosine = 0.0;
  for (int i = 0; i < 6; ++i) cosine += lead(i) * fit.b1(i, 0);
  EXPECT_GT(std::abs(cosine), 1.0 - 1e-9);
  EXPECT_TRUE(fit.converged[0]);
}

TEST(PlsTest, RankOneTargetOnWhitenedKeys) {
  // With orthonormal centered predictor rows, X Y^T is proportional to w b^T,
  // so the first weight is parallel to w.
  std::mt19937_64 rng(43);
  Eigen::MatrixXd raw = ToEigen(RandomMatrix(40, 5, rng));
  raw = raw.rowwise() - raw.colwise().mean();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  const Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(40, 5);
  const MatrixD x = FromEigen(q.transpose());
  std::vector<double> w = {0.2, -0.5, 0.1, 0.7, 0.3};
  const double wn = Norm(w);
  for (double& v : w) v /= wn;
  MatrixD y(2, 40);
  const std::vector<double> b = {1.5, -0.7};
  for (std::size_t i = 0; i < 40; ++i) {
    double proj = 0.0;
    for (std::size_t f = 0; f < 5; ++f) proj += w[f] * x(f, i);
    for (std::size_t r = 0; r < 2; ++r) y(r, i) = b[r] * proj;
  }
  const PlsFit fit = FitPls(x, y, 1);
  EXPECT_GT(std::abs(Dot(fit.b1.col(0), w)), 1.0 - 1e-6);
}

TEST(PlsTest, ConstantFeatureGetsZeroWeight) {
  std::mt19937_64 rng(47);
  MatrixD x = RandomMatrix(4, 25, rng);
  for (double& v : x.row(2)) v = 3.5;
  const MatrixD y = Multiply(RandomMatrix(2, 4, rng), x);
  const PlsFit fit = FitPls(x, y, 1);
  EXPECT_NEAR(fit.b1(2, 0), 0.0, 1e-14);
}

TEST(PlsTest, WeightsOrthonormalAndFullRankReproducesTargets) {
  std::mt19937_64 rng(53);
  const MatrixD x = RandomMatrix(5, 30, rng);
  const MatrixD a = RandomMatrix(3, 5, rng);
  MatrixD y = Multiply(a, x);
  for (std::size_t r = 0; r < 3; ++r) {
    for (double& v : y.row(r)) v += 0.25 * static_cast<double>(r);
  }
  const PlsFit fit = FitPls(x, y, 5);
  const MatrixD gram = Multiply(Transpose(fit.b1), fit.b1);
  EXPECT_LT(FrobeniusNorm(Subtract(gram, MatrixD::Identity(5))), 1e-8);
  EXPECT_LT(FrobeniusNorm(Subtract(fit.Predict(x), y)) / FrobeniusNorm(y),
            1e-6);
  EXPECT_LT(FrobeniusNorm(Subtract(fit.coef, a)), 1e-6);
}

TEST(PlsTest, TooManyComponentsRejected) {
  std::mt19937_64 rng(59);
  EXPECT_THROW(FitPls(RandomMatrix(3, 10, rng), RandomMatrix(2, 10, rng), 4),
               Error);
}

}  // namespace
}  // namespace dama::linalg
