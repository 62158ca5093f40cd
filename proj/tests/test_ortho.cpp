#include "otlrm/ortho.hpp"

#include <gtest/gtest.h>

#include "otlrm/random.hpp"
#include "otlrm/tensor.hpp"

using otlrm::Matrix;
using otlrm::OrthoTransform;
using otlrm::Tensor3;

namespace {

Matrix<double> random_matrix(std::size_t m, std::size_t n, otlrm::Rng& rng) {
  Matrix<double> mat(m, n);
  for (double& v : mat.data()) v = rng.uniform(-1.0, 1.0);
  return mat;
}

Tensor3<double> random_tensor(std::size_t n1, std::size_t n2, std::size_t n3,
                              otlrm::Rng& rng) {
  Tensor3<double> t(n1, n2, n3);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST(HouseholderReflection, AxisReflection) {
  const Matrix<double> f = otlrm::householder_reflection<double>({1.0, 0.0});
  EXPECT_EQ(f(0, 0), -1.0);
  EXPECT_EQ(f(0, 1), 0.0);
  EXPECT_EQ(f(1, 0), 0.0);
  EXPECT_EQ(f(1, 1), 1.0);
}

TEST(HouseholderReflection, ScaleInvariant) {
  otlrm::Rng rng(21);
  std::vector<double> w(5), w2(5);
  for (std::size_t i = 0; i < 5; ++i) {
    w[i] = rng.uniform(-1.0, 1.0);
    w2[i] = 2.0 * w[i];  // power-of-two scaling cancels bitwise
  }
  const Matrix<double> f = otlrm::householder_reflection(w);
  const Matrix<double> f2 = otlrm::householder_reflection(w2);
  EXPECT_EQ(f.data(), f2.data());
}

TEST(HouseholderReflection, NegatesItsNormal) {
  otlrm::Rng rng(22);
  std::vector<double> w(6);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  const Matrix<double> f = otlrm::householder_reflection(w);
  const std::vector<double> fw = matvec(f, w);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(fw[i], -w[i], 1e-14);
}

TEST(HouseholderReflection, NearZeroVectorIsDegenerate) {
  EXPECT_THROW(otlrm::householder_reflection<double>({0.0, 0.0}), otlrm::degenerate_error);
  EXPECT_THROW(otlrm::householder_reflection<double>({1e-13, 0.0}), otlrm::degenerate_error);
}

TEST(BuildMatrix, OneDimensionalChainIsMinusOne) {
  Matrix<double> w(1, 1, {0.7});
  const Matrix<double> l = otlrm::build_matrix(w);
  EXPECT_DOUBLE_EQ(l(0, 0), -1.0);
}

TEST(BuildMatrix, TwoAxisReflectionsGiveMinusIdentity) {
  Matrix<double> w(2, 2, {1.0, 0.0, 0.0, 1.0});  // columns e1, e2
  const Matrix<double> l = otlrm::build_matrix(w);
  EXPECT_NEAR(l(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(l(1, 1), -1.0, 1e-15);
  EXPECT_NEAR(l(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(l(1, 0), 0.0, 1e-15);
}

TEST(BuildMatrix, RandomParametersYieldOrthogonalMatrix) {
  otlrm::Rng rng(23);
  const Matrix<double> w = random_matrix(8, 8, rng);
  const Matrix<double> l = otlrm::build_matrix(w);
  EXPECT_LT(otlrm::orthogonality_defect(l), 1e-12);
  EXPECT_LT(max_abs_diff(matmul(l, transpose(l)), Matrix<double>::identity(8)), 1e-12);
}

TEST(BuildMatrix, DegenerateColumnNamesTheIndex) {
  Matrix<double> w = Matrix<double>::identity(3);
  w(1, 1) = 0.0;  // column 1 becomes zero
  try {
    otlrm::build_matrix(w);
    FAIL() << "expected degenerate_error";
  } catch (const otlrm::degenerate_error& e) {
    EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos);
  }
}

TEST(BuildMatrix, ColumnScaleInvariance) {
  otlrm::Rng rng(24);
  Matrix<double> w = random_matrix(6, 6, rng);
  const Matrix<double> l = otlrm::build_matrix(w);
  for (std::size_t row = 0; row < 6; ++row) w(row, 2) *= -3.7;
  const Matrix<double> l2 = otlrm::build_matrix(w);
  EXPECT_LT(max_abs_diff(l, l2), 1e-12);
}

TEST(OrthoTransform, RoundTripWithinTolerance) {
  otlrm::Rng rng(25);
  const auto t = OrthoTransform<double>::from_parameters(random_matrix(6, 6, rng));
  const Tensor3<double> x = random_tensor(4, 5, 6, rng);
  EXPECT_LT(max_abs_diff(t.apply_inverse(t.apply(x)), x), 1e-10);
}

TEST(OrthoTransform, ApplyIsIsometric) {
  otlrm::Rng rng(26);
  const auto t = OrthoTransform<double>::from_parameters(random_matrix(5, 5, rng));
  const Tensor3<double> x = random_tensor(3, 4, 5, rng);
  EXPECT_NEAR(frob_norm(t.apply(x)), frob_norm(x), 1e-10);
}

TEST(OrthoTransform, SingleSliceTransformNegates) {
  otlrm::Rng rng(27);
  const auto t = OrthoTransform<double>::from_parameters(Matrix<double>(1, 1, {2.0}));
  const Tensor3<double> x = random_tensor(3, 4, 1, rng);
  const Tensor3<double> y = t.apply(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], -x.data()[i]);
}

TEST(OrthoTransform, DimensionMismatchThrows) {
  otlrm::Rng rng(28);
  const auto t = OrthoTransform<double>::from_parameters(random_matrix(4, 4, rng));
  EXPECT_THROW(t.apply(Tensor3<double>(2, 2, 3)), otlrm::dim_error);
}

TEST(OrthoTransform, FromOrthogonalRejectsNonOrthogonal) {
  Matrix<double> a(2, 2, {1.0, 1.0, 0.0, 1.0});
  EXPECT_THROW(OrthoTransform<double>::from_orthogonal(a), otlrm::precondition_error);
}

TEST(ReflectionBetween, MapsXToY) {
  const Matrix<double> f = otlrm::reflection_between<double>({3.0, 4.0}, {5.0, 0.0});
  const std::vector<double> fx = matvec(f, {3.0, 4.0});
  EXPECT_NEAR(fx[0], 5.0, 1e-12);
  EXPECT_NEAR(fx[1], 0.0, 1e-12);
}

TEST(ReflectionBetween, OppositeVectorsGiveAxisReflection) {
  const Matrix<double> f = otlrm::reflection_between<double>({2.5, 0.0}, {-2.5, 0.0});
  const Matrix<double> expected = otlrm::householder_reflection<double>({1.0, 0.0});
  EXPECT_LT(max_abs_diff(f, expected), 1e-15);
}

TEST(ReflectionBetween, EqualVectorsAreDegenerate) {
  EXPECT_THROW(otlrm::reflection_between<double>({1.0, 2.0}, {1.0, 2.0}),
               otlrm::degenerate_error);
}

TEST(ReflectionBetween, NormMismatchViolatesPrecondition) {
  EXPECT_THROW(otlrm::reflection_between<double>({1.0, 0.0}, {2.0, 0.0}),
               otlrm::precondition_error);
}

TEST(ReflectionBetween, SymmetricAndInvolutive) {
  otlrm::Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(5), y(5);
    double nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      x[i] = rng.uniform(-1.0, 1.0);
      y[i] = rng.uniform(-1.0, 1.0);
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    const double s = std::sqrt(nx / ny);
    for (double& v : y) v *= s;  // equalize norms
    const Matrix<double> f = otlrm::reflection_between(x, y);
    EXPECT_LT(max_abs_diff(f, transpose(f)), 1e-15);
    EXPECT_LT(max_abs_diff(matmul(f, f), Matrix<double>::identity(5)), 1e-12);
  }
}

TEST(DecomposeOrthogonal, MinusIdentityRoundTrips) {
  const Matrix<double> a(2, 2, {-1.0, 0.0, 0.0, -1.0});
  const Matrix<double> w = otlrm::decompose_orthogonal(a);
  EXPECT_LT(max_abs_diff(otlrm::build_matrix(w), a), 1e-12);
}

TEST(DecomposeOrthogonal, BuildOutputsRoundTrip) {
  otlrm::Rng rng(30);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix<double> a = otlrm::build_matrix(random_matrix(8, 8, rng));
    const Matrix<double> w = otlrm::decompose_orthogonal(a);
    EXPECT_LT(max_abs_diff(otlrm::build_matrix(w), a), 1e-9);
  }
}

TEST(DecomposeOrthogonal, SignFlipDiagonalRoundTrips) {
  Matrix<double> a = Matrix<double>::identity(3);
  a(0, 0) = -1.0;  // diag(-1, 1, 1), det = -1 = (-1)^3
  const Matrix<double> w = otlrm::decompose_orthogonal(a);
  EXPECT_LT(max_abs_diff(otlrm::build_matrix(w), a), 1e-12);
}

TEST(DecomposeOrthogonal, NonOrthogonalInputViolatesPrecondition) {
  Matrix<double> a(2, 2, {1.0, 0.5, 0.0, 1.0});
  EXPECT_THROW(otlrm::decompose_orthogonal(a), otlrm::precondition_error);
}

TEST(DecomposeOrthogonal, WrongDeterminantParityIsRejected) {
  // diag(-1, 1): det -1, not reachable as a product of two true reflections.
  Matrix<double> a = Matrix<double>::identity(2);
  a(0, 0) = -1.0;
  EXPECT_THROW(otlrm::decompose_orthogonal(a), otlrm::precondition_error);
}

TEST(DecomposeOrthogonal, IdentityRoundTripsViaCancellingPairs) {
  const Matrix<double> a = Matrix<double>::identity(4);
  const Matrix<double> w = otlrm::decompose_orthogonal(a);
  EXPECT_LT(max_abs_diff(otlrm::build_matrix(w), a), 1e-12);
}

TEST(OrthogonalityInvariant, HoldsForManySeeds) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    otlrm::Rng rng(seed);
    for (const std::size_t n : {2u, 5u, 9u}) {
      const Matrix<double> l = otlrm::build_matrix(random_matrix(n, n, rng));
      EXPECT_LT(otlrm::orthogonality_defect(l), 1e-10);
    }
  }
}

TEST(TensorTranspose, MatchesSliceTransposeInTransformDomain) {
  otlrm::Rng rng(31);
  const auto t = OrthoTransform<double>::from_parameters(random_matrix(4, 4, rng));
  const Tensor3<double> u = random_tensor(3, 5, 4, rng);
  const Tensor3<double> lhs = t.apply(otlrm::tensor_transpose(u, t));
  const Tensor3<double> rhs = facewise_transpose(t.apply(u));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}
