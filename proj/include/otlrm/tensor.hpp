#pragma once

// Dense third-order tensors and matrices plus the transform-domain algebra
// everything else is built on: mode-3 products, mode-3 unfolding, face-wise
// products and transposes, f-diagonal embedding.
//
// Layout: frontal-slice-major. Slice k of a Tensor3 is a contiguous
// row-major n1 x n2 block, so face-wise products are slice-local matrix
// multiplies. Matrices are row-major.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace otlrm {

// Error taxonomy: shape mismatches, degenerate parameters (near-zero
// reflection vectors), violated preconditions, numeric failures.
struct dim_error : std::invalid_argument {
  explicit dim_error(const std::string& what) : std::invalid_argument(what) {}
};

struct degenerate_error : std::invalid_argument {
  explicit degenerate_error(const std::string& what) : std::invalid_argument(what) {}
};

struct precondition_error : std::invalid_argument {
  explicit precondition_error(const std::string& what) : std::invalid_argument(what) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

template <typename T>
void require_finite(const std::vector<T>& data, const char* who) {
  for (const T v : data) {
    if (!std::isfinite(v)) {
      throw numeric_error(std::string(who) + ": non-finite entry on construction");
    }
  }
}

inline void require_positive_dim(std::size_t d, const char* who) {
  if (d == 0) throw dim_error(std::string(who) + ": zero dimension");
}

}  // namespace detail

/// Row-major dense matrix of real scalars.
template <typename T = double>
class Matrix {
  static_assert(std::is_floating_point_v<T>);

 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    detail::require_positive_dim(rows, "Matrix");
    detail::require_positive_dim(cols, "Matrix");
    if (!std::isfinite(fill)) throw numeric_error("Matrix: non-finite fill");
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_positive_dim(rows, "Matrix");
    detail::require_positive_dim(cols, "Matrix");
    if (data_.size() != rows * cols) {
      throw dim_error("Matrix: data length " + std::to_string(data_.size()) +
                      " != " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    detail::require_finite(data_, "Matrix");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Dense third-order tensor, frontal-slice-major (slice index outermost,
/// row-major within each n1 x n2 slice).
template <typename T = double>
class Tensor3 {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tensor3() = default;

  Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, T fill = T{})
      : n1_(n1), n2_(n2), n3_(n3), data_(n1 * n2 * n3, fill) {
    detail::require_positive_dim(n1, "Tensor3");
    detail::require_positive_dim(n2, "Tensor3");
    detail::require_positive_dim(n3, "Tensor3");
    if (!std::isfinite(fill)) throw numeric_error("Tensor3: non-finite fill");
  }

  Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, std::vector<T> data)
      : n1_(n1), n2_(n2), n3_(n3), data_(std::move(data)) {
    detail::require_positive_dim(n1, "Tensor3");
    detail::require_positive_dim(n2, "Tensor3");
    detail::require_positive_dim(n3, "Tensor3");
    if (data_.size() != n1 * n2 * n3) {
      throw dim_error("Tensor3: data length " + std::to_string(data_.size()) +
                      " != " + std::to_string(n1) + "x" + std::to_string(n2) + "x" +
                      std::to_string(n3));
    }
    detail::require_finite(data_, "Tensor3");
  }

  std::size_t n1() const { return n1_; }
  std::size_t n2() const { return n2_; }
  std::size_t n3() const { return n3_; }
  std::size_t size() const { return data_.size(); }

  T operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(k * n1_ + i) * n2_ + j];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(k * n1_ + i) * n2_ + j];
  }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  T* slice(std::size_t k) { return data_.data() + k * n1_ * n2_; }
  const T* slice(std::size_t k) const { return data_.data() + k * n1_ * n2_; }

  bool same_shape(const Tensor3& o) const {
    return n1_ == o.n1_ && n2_ == o.n2_ && n3_ == o.n3_;
  }

 private:
  std::size_t n1_ = 0;
  std::size_t n2_ = 0;
  std::size_t n3_ = 0;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Matrix helpers

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw dim_error("matmul: " + std::to_string(a.cols()) + " != " + std::to_string(b.rows()));
  }
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T(0)) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
std::vector<T> matvec(const Matrix<T>& a, const std::vector<T>& x) {
  if (a.cols() != x.size()) throw dim_error("matvec: shape mismatch");
  std::vector<T> y(a.rows(), T{});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T acc{};
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

template <typename T>
T max_abs(const Matrix<T>& a) {
  T m{};
  for (const T v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw dim_error("max_abs_diff: shape mismatch");
  T m{};
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// max |A^T A - I|, the orthogonality defect used all over the test suites.
template <typename T>
T orthogonality_defect(const Matrix<T>& a) {
  if (a.rows() != a.cols()) throw dim_error("orthogonality_defect: square matrix expected");
  const Matrix<T> gram = matmul(transpose(a), a);
  return max_abs_diff(gram, Matrix<T>::identity(a.rows()));
}

// ---------------------------------------------------------------------------
// Tensor3 elementwise helpers

template <typename T>
Tensor3<T> add(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (!a.same_shape(b)) throw dim_error("add: shape mismatch");
  Tensor3<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

template <typename T>
Tensor3<T> sub(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (!a.same_shape(b)) throw dim_error("sub: shape mismatch");
  Tensor3<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

template <typename T>
Tensor3<T> scale(const Tensor3<T>& a, T c) {
  Tensor3<T> out = a;
  for (T& v : out.data()) v *= c;
  return out;
}

template <typename T>
Tensor3<T> hadamard(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (!a.same_shape(b)) throw dim_error("hadamard: shape mismatch");
  Tensor3<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

template <typename T>
T dot(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (!a.same_shape(b)) throw dim_error("dot: shape mismatch");
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

template <typename T>
T frob_norm_sq(const Tensor3<T>& a) {
  T acc{};
  for (const T v : a.data()) acc += v * v;
  return acc;
}

template <typename T>
T frob_norm(const Tensor3<T>& a) {
  return std::sqrt(frob_norm_sq(a));
}

template <typename T>
T sum_abs(const Tensor3<T>& a) {
  T acc{};
  for (const T v : a.data()) acc += std::abs(v);
  return acc;
}

template <typename T>
T max_abs_diff(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (!a.same_shape(b)) throw dim_error("max_abs_diff: shape mismatch");
  T m{};
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Transform-domain algebra

/// Mode-3 tensor-matrix product: every tube (i,j,:) is multiplied by M,
/// i.e. out(:,:,q) = sum_k M(q,k) X(:,:,k).
template <typename T>
Tensor3<T> mode3_product(const Tensor3<T>& x, const Matrix<T>& m) {
  if (m.cols() != x.n3()) {
    throw dim_error("mode3_product: matrix cols " + std::to_string(m.cols()) +
                    " != tensor n3 " + std::to_string(x.n3()));
  }
  Tensor3<T> out(x.n1(), x.n2(), m.rows());
  const std::size_t slice = x.n1() * x.n2();
  for (std::size_t q = 0; q < m.rows(); ++q) {
    T* dst = out.slice(q);
    for (std::size_t k = 0; k < x.n3(); ++k) {
      const T coef = m(q, k);
      if (coef == T(0)) continue;
      const T* src = x.slice(k);
      for (std::size_t s = 0; s < slice; ++s) dst[s] += coef * src[s];
    }
  }
  return out;
}

/// Mode-3 matricization: row k of the result is slice k flattened row-major,
/// so column i*n2+j carries the tube (i,j,:).
template <typename T>
Matrix<T> mode3_unfold(const Tensor3<T>& x) {
  Matrix<T> out(x.n3(), x.n1() * x.n2());
  const std::size_t slice = x.n1() * x.n2();
  for (std::size_t k = 0; k < x.n3(); ++k) {
    const T* src = x.slice(k);
    for (std::size_t s = 0; s < slice; ++s) out(k, s) = src[s];
  }
  return out;
}

template <typename T>
Tensor3<T> mode3_fold(const Matrix<T>& m, std::size_t n1, std::size_t n2, std::size_t n3) {
  if (m.rows() != n3 || m.cols() != n1 * n2) {
    throw dim_error("mode3_fold: matrix " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + " inconsistent with shape");
  }
  Tensor3<T> out(n1, n2, n3);
  const std::size_t slice = n1 * n2;
  for (std::size_t k = 0; k < n3; ++k) {
    T* dst = out.slice(k);
    for (std::size_t s = 0; s < slice; ++s) dst[s] = m(k, s);
  }
  return out;
}

/// Face-wise product: slice k of the result is A^(k) B^(k).
template <typename T>
Tensor3<T> facewise_product(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (a.n2() != b.n1() || a.n3() != b.n3()) {
    throw dim_error("facewise_product: inner dims " + std::to_string(a.n2()) + "/" +
                    std::to_string(b.n1()) + " or slice counts " + std::to_string(a.n3()) +
                    "/" + std::to_string(b.n3()) + " mismatch");
  }
  Tensor3<T> out(a.n1(), b.n2(), a.n3());
  for (std::size_t k = 0; k < a.n3(); ++k) {
    const T* pa = a.slice(k);
    const T* pb = b.slice(k);
    T* pc = out.slice(k);
    const std::size_t m = a.n1(), inner = a.n2(), n = b.n2();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t l = 0; l < inner; ++l) {
        const T ail = pa[i * inner + l];
        if (ail == T(0)) continue;
        const T* brow = pb + l * n;
        T* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
      }
    }
  }
  return out;
}

/// Slice-wise transpose: slice k of the result is (A^(k))^T.
template <typename T>
Tensor3<T> facewise_transpose(const Tensor3<T>& a) {
  Tensor3<T> out(a.n2(), a.n1(), a.n3());
  for (std::size_t k = 0; k < a.n3(); ++k)
    for (std::size_t i = 0; i < a.n1(); ++i)
      for (std::size_t j = 0; j < a.n2(); ++j) out(j, i, k) = a(i, j, k);
  return out;
}

/// Embed row k of S as the diagonal of slice k: diag_embed(S)(i,i,k) = S(k,i).
template <typename T>
Tensor3<T> diag_embed(const Matrix<T>& s) {
  const std::size_t n3 = s.rows(), r = s.cols();
  Tensor3<T> out(r, r, n3);
  for (std::size_t k = 0; k < n3; ++k)
    for (std::size_t i = 0; i < r; ++i) out(i, i, k) = s(k, i);
  return out;
}

/// Tensor whose every frontal slice is the r x r identity.
template <typename T>
Tensor3<T> identity_slices(std::size_t r, std::size_t n3) {
  Tensor3<T> out(r, r, n3);
  for (std::size_t k = 0; k < n3; ++k)
    for (std::size_t i = 0; i < r; ++i) out(i, i, k) = T(1);
  return out;
}

}  // namespace otlrm
