#pragma once

// Capture operators H(.) and observation simulators for the three
// applications: Bernoulli-mask completion, CASSI shift-mask-integrate, and
// additive Gaussian noise. All simulators are pure given (input, seed).

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>

#include "otlrm/random.hpp"
#include "otlrm/tensor.hpp"

namespace otlrm {

/// Sampling-set completion: entries in omega (1) are kept, the rest zeroed.
template <typename T = double>
struct Completion {
  Tensor3<T> omega;  // 0/1 indicator, same shape as the data
};

/// Coded-aperture snapshot compressive imaging: each band is masked, sheared
/// right by d per band index, and summed into one 2-D measurement.
template <typename T = double>
struct Cassi {
  Matrix<T> mask;  // n1 x n2
  int shift = 1;
};

/// Additive i.i.d. Gaussian noise of standard deviation sigma.
template <typename T = double>
struct Noise {
  T sigma{};
};

template <typename T = double>
using ForwardOperator = std::variant<Completion<T>, Cassi<T>, Noise<T>>;

/// Measurement width n2 + d (n3 - 1) of the CASSI operator.
inline std::size_t cassi_width(std::size_t n2, std::size_t n3, int shift) {
  return n2 + static_cast<std::size_t>(shift) * (n3 - 1);
}

/// I.i.d. Bernoulli(p) indicator tensor, deterministic per seed.
template <typename T = double>
Tensor3<T> bernoulli_mask(std::size_t n1, std::size_t n2, std::size_t n3, double p,
                          std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) {
    throw precondition_error("bernoulli_mask: p must lie in [0, 1], got " + std::to_string(p));
  }
  Tensor3<T> omega(n1, n2, n3);
  Rng rng(seed);
  for (T& v : omega.data()) v = rng.bernoulli(p) ? T(1) : T(0);
  return omega;
}

/// H_Omega: keep observed entries, zero the rest. Idempotent, self-adjoint.
template <typename T>
Tensor3<T> apply_completion(const Tensor3<T>& x, const Tensor3<T>& omega) {
  if (!x.same_shape(omega)) throw dim_error("apply_completion: shape mismatch");
  return hadamard(x, omega);
}

/// CASSI forward: out(i, j + d k) += X(i,j,k) M(i,j). Linear in X.
template <typename T>
Matrix<T> cassi_forward(const Tensor3<T>& x, const Matrix<T>& mask, int shift) {
  if (mask.rows() != x.n1() || mask.cols() != x.n2()) {
    throw dim_error("cassi_forward: mask " + std::to_string(mask.rows()) + "x" +
                    std::to_string(mask.cols()) + " does not match bands " +
                    std::to_string(x.n1()) + "x" + std::to_string(x.n2()));
  }
  if (shift < 1) throw precondition_error("cassi_forward: shift must be >= 1");
  Matrix<T> out(x.n1(), cassi_width(x.n2(), x.n3(), shift));
  const std::size_t d = static_cast<std::size_t>(shift);
  for (std::size_t k = 0; k < x.n3(); ++k)
    for (std::size_t i = 0; i < x.n1(); ++i)
      for (std::size_t j = 0; j < x.n2(); ++j)
        out(i, j + d * k) += x(i, j, k) * mask(i, j);
  return out;
}

/// Transpose of cassi_forward: broadcast the measurement back to each band's
/// shifted window and re-mask.
template <typename T>
Tensor3<T> cassi_adjoint(const Matrix<T>& b, const Matrix<T>& mask, int shift,
                         std::size_t n3) {
  const std::size_t n1 = mask.rows(), n2 = mask.cols();
  if (shift < 1) throw precondition_error("cassi_adjoint: shift must be >= 1");
  if (b.rows() != n1 || b.cols() != cassi_width(n2, n3, shift)) {
    throw dim_error("cassi_adjoint: measurement shape mismatch");
  }
  Tensor3<T> out(n1, n2, n3);
  const std::size_t d = static_cast<std::size_t>(shift);
  for (std::size_t k = 0; k < n3; ++k)
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        out(i, j, k) = b(i, j + d * k) * mask(i, j);
  return out;
}

/// Y + N with N i.i.d. normal(0, sigma^2), deterministic per seed.
template <typename T>
Tensor3<T> add_gaussian_noise(const Tensor3<T>& y, T sigma, std::uint64_t seed) {
  if (sigma < T(0)) throw precondition_error("add_gaussian_noise: sigma must be nonnegative");
  Tensor3<T> out = y;
  if (sigma == T(0)) return out;
  Rng rng(seed);
  for (T& v : out.data()) v += sigma * static_cast<T>(rng.normal());
  return out;
}

}  // namespace otlrm
