#include "otlrm/tensor.hpp"

#include <gtest/gtest.h>

#include "otlrm/ortho.hpp"
#include "otlrm/random.hpp"

using otlrm::Matrix;
using otlrm::OrthoTransform;
using otlrm::Tensor3;

namespace {

Tensor3<double> random_tensor(std::size_t n1, std::size_t n2, std::size_t n3,
                              otlrm::Rng& rng) {
  Tensor3<double> t(n1, n2, n3);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

Matrix<double> random_matrix(std::size_t m, std::size_t n, otlrm::Rng& rng) {
  Matrix<double> mat(m, n);
  for (double& v : mat.data()) v = rng.uniform(-1.0, 1.0);
  return mat;
}

// Literal transcription of the mode-3 definition: out(i,j,q) = sum_k M(q,k) X(i,j,k).
Tensor3<double> mode3_triple_loop(const Tensor3<double>& x, const Matrix<double>& m) {
  Tensor3<double> out(x.n1(), x.n2(), m.rows());
  for (std::size_t i = 0; i < x.n1(); ++i)
    for (std::size_t j = 0; j < x.n2(); ++j)
      for (std::size_t q = 0; q < m.rows(); ++q) {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.n3(); ++k) acc += m(q, k) * x(i, j, k);
        out(i, j, q) = acc;
      }
  return out;
}

// Naive per-slice matrix multiply.
Tensor3<double> facewise_naive(const Tensor3<double>& a, const Tensor3<double>& b) {
  Tensor3<double> out(a.n1(), b.n2(), a.n3());
  for (std::size_t k = 0; k < a.n3(); ++k)
    for (std::size_t i = 0; i < a.n1(); ++i)
      for (std::size_t j = 0; j < b.n2(); ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < a.n2(); ++l) acc += a(i, l, k) * b(l, j, k);
        out(i, j, k) = acc;
      }
  return out;
}

}  // namespace

TEST(Tensor3, ConstructionChecksShapeAndFiniteness) {
  EXPECT_THROW(Tensor3<double>(0, 2, 2), otlrm::dim_error);
  EXPECT_THROW(Tensor3<double>(2, 2, 2, std::vector<double>(7, 0.0)), otlrm::dim_error);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Tensor3<double>(2, 2, 2, std::move(bad)), otlrm::numeric_error);
}

TEST(Mode3Product, PermutationSwapsTubeEntries) {
  Tensor3<double> x(1, 1, 2);
  x(0, 0, 0) = 1.0;
  x(0, 0, 1) = 2.0;
  Matrix<double> swap(2, 2, {0.0, 1.0, 1.0, 0.0});
  const Tensor3<double> out = mode3_product(x, swap);
  EXPECT_EQ(out(0, 0, 0), 2.0);
  EXPECT_EQ(out(0, 0, 1), 1.0);
}

TEST(Mode3Product, IdentityLeavesInputUnchanged) {
  otlrm::Rng rng(1);
  const Tensor3<double> x = random_tensor(3, 2, 4, rng);
  const Tensor3<double> out = mode3_product(x, Matrix<double>::identity(4));
  EXPECT_EQ(out.data(), x.data());
}

TEST(Mode3Product, MatchesTripleLoopOracle) {
  otlrm::Rng rng(2);
  const Tensor3<double> x = random_tensor(2, 2, 3, rng);
  const Matrix<double> m = random_matrix(3, 3, rng);
  EXPECT_LT(max_abs_diff(mode3_product(x, m), mode3_triple_loop(x, m)), 1e-14);
}

TEST(Mode3Product, ShapeMismatchThrows) {
  Tensor3<double> x(2, 2, 3);
  EXPECT_THROW(mode3_product(x, Matrix<double>::identity(2)), otlrm::dim_error);
}

TEST(Mode3Product, CompositionMatchesMatrixProduct) {
  otlrm::Rng rng(3);
  const Tensor3<double> x = random_tensor(3, 4, 5, rng);
  const Matrix<double> m1 = random_matrix(6, 5, rng);
  const Matrix<double> m2 = random_matrix(4, 6, rng);
  const Tensor3<double> chained = mode3_product(mode3_product(x, m1), m2);
  const Tensor3<double> fused = mode3_product(x, matmul(m2, m1));
  EXPECT_LT(max_abs_diff(chained, fused), 1e-12);
}

TEST(Mode3Unfold, TubeBecomesColumn) {
  Tensor3<double> x(1, 1, 3);
  x(0, 0, 0) = 1.0;
  x(0, 0, 1) = 2.0;
  x(0, 0, 2) = 3.0;
  const Matrix<double> m = mode3_unfold(x);
  ASSERT_EQ(m.rows(), 3u);
  ASSERT_EQ(m.cols(), 1u);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(1, 0), 2.0);
  EXPECT_EQ(m(2, 0), 3.0);
}

TEST(Mode3Unfold, RoundTripIsBitExact) {
  otlrm::Rng rng(4);
  const Tensor3<double> x = random_tensor(3, 4, 5, rng);
  const Tensor3<double> back = mode3_fold(mode3_unfold(x), 3, 4, 5);
  EXPECT_EQ(back.data(), x.data());
}

TEST(Mode3Unfold, CommutesWithMode3Product) {
  otlrm::Rng rng(5);
  const Tensor3<double> x = random_tensor(2, 3, 4, rng);
  const Matrix<double> m = random_matrix(5, 4, rng);
  const Matrix<double> lhs = mode3_unfold(mode3_product(x, m));
  const Matrix<double> rhs = matmul(m, mode3_unfold(x));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-13);
}

TEST(Mode3Fold, InconsistentShapeThrows) {
  Matrix<double> m(3, 12);
  EXPECT_THROW(otlrm::mode3_fold(m, 3, 4, 4), otlrm::dim_error);
}

TEST(FacewiseProduct, ScalarSlices) {
  Tensor3<double> a(1, 1, 2), b(1, 1, 2);
  a(0, 0, 0) = 2.0;
  a(0, 0, 1) = 3.0;
  b(0, 0, 0) = 5.0;
  b(0, 0, 1) = 7.0;
  const Tensor3<double> out = facewise_product(a, b);
  EXPECT_EQ(out(0, 0, 0), 10.0);
  EXPECT_EQ(out(0, 0, 1), 21.0);
}

TEST(FacewiseProduct, IdentitySlicesActAsIdentity) {
  otlrm::Rng rng(6);
  const Tensor3<double> a = random_tensor(3, 4, 2, rng);
  const Tensor3<double> out = facewise_product(a, otlrm::identity_slices<double>(4, 2));
  EXPECT_EQ(out.data(), a.data());
}

TEST(FacewiseProduct, MatchesPerSliceOracle) {
  otlrm::Rng rng(7);
  const Tensor3<double> a = random_tensor(2, 3, 2, rng);
  const Tensor3<double> b = random_tensor(3, 2, 2, rng);
  EXPECT_LT(max_abs_diff(facewise_product(a, b), facewise_naive(a, b)), 1e-14);
}

TEST(FacewiseProduct, MismatchThrows) {
  Tensor3<double> a(2, 3, 2), b(2, 2, 2), c(3, 2, 3);
  EXPECT_THROW(facewise_product(a, b), otlrm::dim_error);
  EXPECT_THROW(facewise_product(a, c), otlrm::dim_error);
}

TEST(FacewiseProduct, BilinearScalingIsExact) {
  otlrm::Rng rng(8);
  const Tensor3<double> a = random_tensor(2, 3, 3, rng);
  const Tensor3<double> b = random_tensor(3, 4, 3, rng);
  const double c = 0.5;  // power of two: scaling commutes exactly
  const Tensor3<double> lhs = facewise_product(scale(a, c), b);
  const Tensor3<double> rhs = scale(facewise_product(a, b), c);
  EXPECT_EQ(lhs.data(), rhs.data());
}

TEST(FacewiseTranspose, TransposesEverySlice) {
  otlrm::Rng rng(9);
  const Tensor3<double> a = random_tensor(2, 3, 2, rng);
  const Tensor3<double> at = facewise_transpose(a);
  ASSERT_EQ(at.n1(), 3u);
  ASSERT_EQ(at.n2(), 2u);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(at(j, i, k), a(i, j, k));
}

TEST(FacewiseTranspose, DoubleTransposeIsIdentity) {
  otlrm::Rng rng(10);
  const Tensor3<double> a = random_tensor(4, 2, 3, rng);
  EXPECT_EQ(facewise_transpose(facewise_transpose(a)).data(), a.data());
}

TEST(FacewiseTranspose, ReversesProducts) {
  otlrm::Rng rng(11);
  const Tensor3<double> a = random_tensor(2, 3, 2, rng);
  const Tensor3<double> b = random_tensor(3, 4, 2, rng);
  const Tensor3<double> lhs = facewise_transpose(facewise_product(a, b));
  const Tensor3<double> rhs =
      facewise_product(facewise_transpose(b), facewise_transpose(a));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-14);
}

TEST(TProduct, IdentityTransformReducesToFacewise) {
  otlrm::Rng rng(12);
  const Tensor3<double> a = random_tensor(2, 3, 4, rng);
  const Tensor3<double> b = random_tensor(3, 2, 4, rng);
  const auto id = OrthoTransform<double>::identity(4);
  EXPECT_LT(max_abs_diff(t_product(a, b, id), facewise_product(a, b)), 1e-13);
}

TEST(TProduct, IdentityElementByConstruction) {
  otlrm::Rng rng(13);
  Matrix<double> w = random_matrix(4, 4, rng);
  const auto t = OrthoTransform<double>::from_parameters(w);
  const Tensor3<double> a = random_tensor(3, 5, 4, rng);
  const Tensor3<double> ihat = otlrm::t_identity(5, t);
  EXPECT_LT(max_abs_diff(t_product(a, ihat, t), a), 1e-12);
}

TEST(TProduct, MatchesThreeStepOracle) {
  otlrm::Rng rng(14);
  Matrix<double> w = random_matrix(3, 3, rng);
  const auto t = OrthoTransform<double>::from_parameters(w);
  const Tensor3<double> a = random_tensor(2, 4, 3, rng);
  const Tensor3<double> b = random_tensor(4, 2, 3, rng);

  // explicit three-step evaluation: transform, slice-multiply, inverse
  const Tensor3<double> ah = mode3_triple_loop(a, t.matrix());
  const Tensor3<double> bh = mode3_triple_loop(b, t.matrix());
  const Tensor3<double> prod = facewise_naive(ah, bh);
  const Tensor3<double> expected = mode3_triple_loop(prod, transpose(t.matrix()));

  EXPECT_LT(max_abs_diff(t_product(a, b, t), expected), 1e-12);
}

TEST(TProduct, AssociativityUnderSharedTransform) {
  otlrm::Rng rng(15);
  Matrix<double> w = random_matrix(3, 3, rng);
  const auto t = OrthoTransform<double>::from_parameters(w);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor3<double> a = random_tensor(2, 3, 3, rng);
    const Tensor3<double> b = random_tensor(3, 4, 3, rng);
    const Tensor3<double> c = random_tensor(4, 2, 3, rng);
    const Tensor3<double> lhs = t_product(t_product(a, b, t), c, t);
    const Tensor3<double> rhs = t_product(a, t_product(b, c, t), t);
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-10);
  }
}

TEST(DiagEmbed, EmbedsRowsAsDiagonals) {
  Matrix<double> s(2, 2, {1.0, 2.0, 3.0, 4.0});
  const Tensor3<double> d = diag_embed(s);
  ASSERT_EQ(d.n1(), 2u);
  ASSERT_EQ(d.n3(), 2u);
  EXPECT_EQ(d(0, 0, 0), 1.0);
  EXPECT_EQ(d(1, 1, 0), 2.0);
  EXPECT_EQ(d(0, 0, 1), 3.0);
  EXPECT_EQ(d(1, 1, 1), 4.0);
  EXPECT_EQ(d(0, 1, 0), 0.0);
  EXPECT_EQ(d(1, 0, 1), 0.0);
}

TEST(DiagEmbed, ZeroMatrixGivesZeroTensor) {
  const Tensor3<double> d = diag_embed(Matrix<double>(3, 2));
  for (const double v : d.data()) EXPECT_EQ(v, 0.0);
}

TEST(DiagEmbed, OffDiagonalMassIsExactlyZero) {
  otlrm::Rng rng(16);
  Matrix<double> s(4, 3);
  for (double& v : s.data()) v = rng.uniform(-2.0, 2.0);
  const Tensor3<double> d = diag_embed(s);
  double off = 0.0;
  for (std::size_t k = 0; k < d.n3(); ++k)
    for (std::size_t i = 0; i < d.n1(); ++i)
      for (std::size_t j = 0; j < d.n2(); ++j)
        if (i != j) off += std::abs(d(i, j, k));
  EXPECT_EQ(off, 0.0);
}
