#pragma once

// Classical transform-domain t-SVD machinery: per-slice SVD, the t-SVT
// shrinkage operator, tensor nuclear norm and tubal rank. Serves as the
// independent oracle for the generative model and as a standalone baseline.
//
// The SVD kernel is a one-sided Jacobi: accurate at desk scale and free of
// external linear-algebra dependencies. Not intended for slices much larger
// than ~512.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "otlrm/ortho.hpp"
#include "otlrm/tensor.hpp"

namespace otlrm {

template <typename T = double>
struct Svd {
  Matrix<T> u;            // m x k, column-orthonormal
  std::vector<T> s;       // k nonincreasing, nonnegative
  Matrix<T> v;            // n x k, column-orthonormal
};

/// Per-frontal-slice thin SVDs of a transformed tensor.
template <typename T = double>
struct SliceSvd {
  std::vector<Svd<T>> slices;
};

namespace detail_svd {

// One-sided Jacobi on the columns of g (m x n, m >= n), accumulating the
// right factor into v. Columns of g converge to u_i * s_i.
template <typename T>
void jacobi_sweep_driver(Matrix<T>& g, Matrix<T>& v) {
  const std::size_t m = g.rows(), n = g.cols();
  constexpr int kMaxSweeps = 60;
  const T conv = T(1e-12);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    T worst{};
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        T app{}, aqq{}, apq{};
        for (std::size_t i = 0; i < m; ++i) {
          app += g(i, p) * g(i, p);
          aqq += g(i, q) * g(i, q);
          apq += g(i, p) * g(i, q);
        }
        const T denom = std::sqrt(app * aqq);
        if (denom == T(0)) continue;
        const T off = std::abs(apq) / denom;
        worst = std::max(worst, off);
        if (off <= conv) continue;

        const T zeta = (aqq - app) / (T(2) * apq);
        const T t = (zeta >= T(0) ? T(1) : T(-1)) /
                    (std::abs(zeta) + std::sqrt(T(1) + zeta * zeta));
        const T c = T(1) / std::sqrt(T(1) + t * t);
        const T s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const T gp = g(i, p), gq = g(i, q);
          g(i, p) = c * gp - s * gq;
          g(i, q) = s * gp + c * gq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const T vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (worst <= conv) return;
  }
  throw numeric_error("jacobi_svd: no convergence after " + std::to_string(kMaxSweeps) +
                      " sweeps");
}

// Orthonormal completion for (near-)zero columns of u.
template <typename T>
void complete_column(Matrix<T>& u, std::size_t col) {
  const std::size_t m = u.rows();
  for (std::size_t cand = 0; cand < m; ++cand) {
    std::vector<T> e(m, T{});
    e[cand] = T(1);
    for (std::size_t c = 0; c < u.cols(); ++c) {
      if (c == col) continue;
      T proj{};
      for (std::size_t i = 0; i < m; ++i) proj += e[i] * u(i, c);
      for (std::size_t i = 0; i < m; ++i) e[i] -= proj * u(i, c);
    }
    T norm{};
    for (const T x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > T(0.5)) {
      for (std::size_t i = 0; i < m; ++i) u(i, col) = e[i] / norm;
      return;
    }
  }
  throw numeric_error("jacobi_svd: failed to complete orthonormal basis");
}

}  // namespace detail_svd

/// Thin SVD A = U diag(s) V^T via one-sided Jacobi. Singular values are
/// sorted nonincreasing; U and V are column-orthonormal.
template <typename T>
Svd<T> jacobi_svd(const Matrix<T>& a) {
  if (a.rows() < a.cols()) {
    Svd<T> t = jacobi_svd(transpose(a));
    return Svd<T>{std::move(t.v), std::move(t.s), std::move(t.u)};
  }
  const std::size_t m = a.rows(), n = a.cols();
  Matrix<T> g = a;
  Matrix<T> v = Matrix<T>::identity(n);
  detail_svd::jacobi_sweep_driver(g, v);

  std::vector<T> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    T norm{};
    for (std::size_t i = 0; i < m; ++i) norm += g(i, j) * g(i, j);
    s[j] = std::sqrt(norm);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

  Svd<T> out{Matrix<T>(m, n), std::vector<T>(n), Matrix<T>(n, n)};
  const T smax = s[order[0]];
  const T tiny = smax * T(1e-14);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.s[j] = s[src];
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    if (s[src] > tiny && s[src] > T(0)) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, j) = g(i, src) / s[src];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!(out.s[j] > tiny) || out.s[j] == T(0)) detail_svd::complete_column(out.u, j);
  }
  return out;
}

/// SVT: U max(S - gamma, 0) V^T.
template <typename T>
Matrix<T> matrix_svt(const Matrix<T>& a, T gamma) {
  if (gamma < T(0)) throw precondition_error("matrix_svt: gamma must be nonnegative");
  Svd<T> f = jacobi_svd(a);
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t k = 0; k < f.s.size(); ++k) {
    const T sv = std::max(f.s[k] - gamma, T(0));
    if (sv == T(0)) continue;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += sv * f.u(i, k) * f.v(j, k);
  }
  return out;
}

/// Per-slice SVDs of the transformed tensor L(X).
template <typename T>
SliceSvd<T> slice_svd(const Tensor3<T>& x, const OrthoTransform<T>& l) {
  const Tensor3<T> xh = l.apply(x);
  SliceSvd<T> out;
  out.slices.reserve(xh.n3());
  for (std::size_t k = 0; k < xh.n3(); ++k) {
    Matrix<T> slice(xh.n1(), xh.n2());
    for (std::size_t i = 0; i < xh.n1(); ++i)
      for (std::size_t j = 0; j < xh.n2(); ++j) slice(i, j) = xh(i, j, k);
    out.slices.push_back(jacobi_svd(slice));
  }
  return out;
}

/// t-SVT: shrink every transformed slice's singular values by gamma and
/// transform back. Exact minimizer of gamma |Z|_{L,*} + 1/2 |Z - X|_F^2.
template <typename T>
Tensor3<T> tsvt(const Tensor3<T>& x, const OrthoTransform<T>& l, T gamma) {
  if (gamma < T(0)) throw precondition_error("tsvt: gamma must be nonnegative");
  const Tensor3<T> xh = l.apply(x);
  Tensor3<T> sh(xh.n1(), xh.n2(), xh.n3());
  for (std::size_t k = 0; k < xh.n3(); ++k) {
    Matrix<T> slice(xh.n1(), xh.n2());
    for (std::size_t i = 0; i < xh.n1(); ++i)
      for (std::size_t j = 0; j < xh.n2(); ++j) slice(i, j) = xh(i, j, k);
    const Matrix<T> shrunk = matrix_svt(slice, gamma);
    for (std::size_t i = 0; i < xh.n1(); ++i)
      for (std::size_t j = 0; j < xh.n2(); ++j) sh(i, j, k) = shrunk(i, j);
  }
  return l.apply_inverse(sh);
}

/// Tensor nuclear norm: sum of the nuclear norms of the transformed slices.
template <typename T>
T tnn(const Tensor3<T>& x, const OrthoTransform<T>& l) {
  const SliceSvd<T> f = slice_svd(x, l);
  T acc{};
  for (const auto& sl : f.slices)
    for (const T sv : sl.s) acc += sv;
  return acc;
}

/// Tubal rank: largest per-slice count of singular values above
/// tol * (largest singular value across all transformed slices).
template <typename T>
std::size_t tubal_rank(const Tensor3<T>& x, const OrthoTransform<T>& l, T tol = T(1e-9)) {
  if (!(tol > T(0))) throw precondition_error("tubal_rank: tol must be positive");
  const SliceSvd<T> f = slice_svd(x, l);
  T smax{};
  for (const auto& sl : f.slices)
    for (const T sv : sl.s) smax = std::max(smax, sv);
  if (smax == T(0)) return 0;
  const T cut = tol * smax;
  std::size_t rank = 0;
  for (const auto& sl : f.slices) {
    std::size_t count = 0;
    for (const T sv : sl.s)
      if (sv > cut) ++count;
    rank = std::max(rank, count);
  }
  return rank;
}

}  // namespace otlrm
