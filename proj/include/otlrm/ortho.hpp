#pragma once

// Learnable endogenously orthogonal transform: an n x n orthogonal matrix
// built as the product L = F_1 F_2 ... F_n of Householder reflections
// F_i = I - 2 w_i w_i^T / |w_i|^2, one per column of a free parameter matrix
// W. L is orthogonal for every admissible W, so orthogonality never has to be
// enforced by a loss. Also provides the constructive converse: extracting
// reflection vectors from a given orthogonal matrix.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "otlrm/tensor.hpp"

namespace otlrm {

/// Columns with norm at or below this are rejected as degenerate.
inline constexpr double kEpsReflection = 1e-12;

/// F = I - 2 w w^T / |w|^2. Symmetric, orthogonal, involutive.
template <typename T>
Matrix<T> householder_reflection(const std::vector<T>& w) {
  const std::size_t n = w.size();
  if (n == 0) throw dim_error("householder_reflection: empty vector");
  T s{};
  for (const T v : w) s += v * v;
  if (!(std::sqrt(s) > T(kEpsReflection))) {
    throw degenerate_error("householder_reflection: near-zero reflection vector");
  }
  Matrix<T> f = Matrix<T>::identity(n);
  const T c = T(2) / s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) f(i, j) -= c * w[i] * w[j];
  return f;
}

/// L = F_1 F_2 ... F_n with F_i built from column i of W.
/// Applied as rank-1 updates, never materializing the individual F_i.
template <typename T>
Matrix<T> build_matrix(const Matrix<T>& w) {
  if (w.rows() != w.cols()) throw dim_error("build_matrix: square parameter matrix expected");
  const std::size_t n = w.rows();

  std::vector<T> norms_sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s{};
    for (std::size_t row = 0; row < n; ++row) s += w(row, i) * w(row, i);
    if (!(std::sqrt(s) > T(kEpsReflection))) {
      throw degenerate_error("build_matrix: column " + std::to_string(i) +
                             " has near-zero norm");
    }
    norms_sq[i] = s;
  }

  Matrix<T> l = Matrix<T>::identity(n);
  std::vector<T> wtm(n);
  // Left-multiply by F_i for i = n..1 so the final product is F_1 F_2 ... F_n.
  for (std::size_t step = n; step-- > 0;) {
    const T c = T(2) / norms_sq[step];
    for (std::size_t j = 0; j < n; ++j) {
      T acc{};
      for (std::size_t row = 0; row < n; ++row) acc += w(row, step) * l(row, j);
      wtm[j] = acc;
    }
    for (std::size_t row = 0; row < n; ++row) {
      const T coef = c * w(row, step);
      for (std::size_t j = 0; j < n; ++j) l(row, j) -= coef * wtm[j];
    }
  }
  return l;
}

/// Orthogonal mode-3 transform. Normally constructed from Householder
/// parameters; identity/from_orthogonal exist for baselines and oracles that
/// need a fixed transform.
template <typename T = double>
class OrthoTransform {
 public:
  static OrthoTransform from_parameters(Matrix<T> w) {
    OrthoTransform t;
    t.l_ = build_matrix(w);
    t.w_ = std::move(w);
    return t;
  }

  static OrthoTransform identity(std::size_t n) {
    OrthoTransform t;
    t.l_ = Matrix<T>::identity(n);
    return t;
  }

  /// Wrap an existing orthogonal matrix (checked) without parameters.
  static OrthoTransform from_orthogonal(Matrix<T> l, T tol = T(1e-8)) {
    if (l.rows() != l.cols()) throw dim_error("OrthoTransform: square matrix expected");
    if (orthogonality_defect(l) >= tol) {
      throw precondition_error("OrthoTransform: matrix is not orthogonal");
    }
    OrthoTransform t;
    t.l_ = std::move(l);
    return t;
  }

  std::size_t n() const { return l_.rows(); }
  const Matrix<T>& matrix() const { return l_; }
  const std::optional<Matrix<T>>& parameters() const { return w_; }

  Tensor3<T> apply(const Tensor3<T>& x) const {
    check_n3(x);
    return mode3_product(x, l_);
  }

  /// Inverse transform; L^-1 = L^T by orthogonality.
  Tensor3<T> apply_inverse(const Tensor3<T>& x) const {
    check_n3(x);
    return mode3_product(x, transpose(l_));
  }

 private:
  OrthoTransform() = default;

  void check_n3(const Tensor3<T>& x) const {
    if (x.n3() != n()) {
      throw dim_error("OrthoTransform: tensor n3 " + std::to_string(x.n3()) +
                      " != transform size " + std::to_string(n()));
    }
  }

  std::optional<Matrix<T>> w_;
  Matrix<T> l_;
};

/// The Householder transformation mapping x to y (requires |x| = |y|),
/// built from w = (x - y) / |x - y|.
template <typename T>
Matrix<T> reflection_between(const std::vector<T>& x, const std::vector<T>& y) {
  if (x.size() != y.size()) throw dim_error("reflection_between: length mismatch");
  T nx{}, ny{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  if (std::abs(nx - ny) > T(1e-9)) {
    throw precondition_error("reflection_between: |x| and |y| differ beyond 1e-9");
  }
  std::vector<T> w(x.size());
  T nw{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    w[i] = x[i] - y[i];
    nw += w[i] * w[i];
  }
  if (!(std::sqrt(nw) > T(kEpsReflection))) {
    throw degenerate_error("reflection_between: x = y, no reflection needed");
  }
  return householder_reflection(w);
}

/// B := F B where F reflects about w (only rows >= first_row of w are nonzero).
template <typename T>
void apply_reflection_left(Matrix<T>& b, const std::vector<T>& w, std::size_t first_row) {
  const std::size_t n = b.rows();
  T s{};
  for (std::size_t i = first_row; i < n; ++i) s += w[i] * w[i];
  const T c = T(2) / s;
  for (std::size_t col = 0; col < n; ++col) {
    T acc{};
    for (std::size_t i = first_row; i < n; ++i) acc += w[i] * b(i, col);
    acc *= c;
    for (std::size_t i = first_row; i < n; ++i) b(i, col) -= w[i] * acc;
  }
}

/// Constructive converse of build_matrix: extract reflection vectors W such
/// that build_matrix(W) reproduces the orthogonal A. Triangularizes A with a
/// positive-diagonal convention, appends the e_n correction when the residual
/// diagonal entry is -1, and pads unused columns with cancelling pairs.
template <typename T>
Matrix<T> decompose_orthogonal(const Matrix<T>& a, T tol = T(1e-8)) {
  if (a.rows() != a.cols()) throw dim_error("decompose_orthogonal: square matrix expected");
  const std::size_t n = a.rows();
  if (orthogonality_defect(a) >= tol) {
    throw precondition_error("decompose_orthogonal: input is not orthogonal");
  }

  Matrix<T> b = a;
  std::vector<std::vector<T>> vecs;

  for (std::size_t j = 0; j + 1 < n; ++j) {
    // Reflect column j of the trailing block onto +|a| e_j.
    T sigma{};  // below-diagonal mass
    for (std::size_t i = j + 1; i < n; ++i) sigma += b(i, j) * b(i, j);
    const T ajj = b(j, j);
    if (sigma < T(1e-28)) {
      if (ajj > T(0)) continue;  // already in place, no reflection
      std::vector<T> w(n, T{});
      w[j] = T(1);  // flips the sign of row/column j
      vecs.push_back(w);
      apply_reflection_left(b, w, j);
      continue;
    }
    const T alpha = std::sqrt(sigma + ajj * ajj);
    std::vector<T> w(n, T{});
    // w = a - alpha e_j with the leading entry computed cancellation-free.
    w[j] = (ajj <= T(0)) ? (ajj - alpha) : (-sigma / (ajj + alpha));
    for (std::size_t i = j + 1; i < n; ++i) w[i] = b(i, j);
    vecs.push_back(w);
    apply_reflection_left(b, w, j);
  }

  if (b(n - 1, n - 1) < T(0)) {
    std::vector<T> w(n, T{});
    w[n - 1] = T(1);
    vecs.push_back(w);
  }

  const std::size_t p = vecs.size();
  if ((n - p) % 2 != 0) {
    // det(A) = -(-1)^n: A is a product of n-1 reflections and no admissible
    // n-column parameter matrix can reproduce it (each factor has det -1).
    throw precondition_error(
        "decompose_orthogonal: determinant parity incompatible with a product of " +
        std::to_string(n) + " reflections");
  }
  Matrix<T> w_out(n, n);
  for (std::size_t c = 0; c < p; ++c)
    for (std::size_t row = 0; row < n; ++row) w_out(row, c) = vecs[c][row];
  for (std::size_t c = p; c < n; ++c) w_out(0, c) = T(1);  // pairs of e_1 cancel
  return w_out;
}

/// Tensor transpose under a transform: L(U^T) equals the slice-wise transpose
/// of L(U).
template <typename T>
Tensor3<T> tensor_transpose(const Tensor3<T>& u, const OrthoTransform<T>& t) {
  return t.apply_inverse(facewise_transpose(t.apply(u)));
}

/// Tensor-tensor product in the transform domain: L^-1(L(A) fw* L(B)).
template <typename T>
Tensor3<T> t_product(const Tensor3<T>& a, const Tensor3<T>& b, const OrthoTransform<T>& t) {
  return t.apply_inverse(facewise_product(t.apply(a), t.apply(b)));
}

/// Identity element of the t-product: L^-1 of the all-identity-slice tensor.
template <typename T>
Tensor3<T> t_identity(std::size_t r, const OrthoTransform<T>& t) {
  return t.apply_inverse(identity_slices<T>(r, t.n()));
}

}  // namespace otlrm
