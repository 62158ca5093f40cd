#pragma once

// PSNR and band-averaged SSIM. Per-band values are averaged arithmetically
// across bands; a band with zero MSE reports the infinity sentinel.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "otlrm/tensor.hpp"

namespace otlrm {

template <typename T = double>
struct MetricReport {
  std::vector<T> psnr_per_band;
  std::vector<T> ssim_per_band;
  T psnr = T(0);
  T ssim = T(0);
};

/// Per-band 10 log10(peak^2 / MSE) and the band average.
template <typename T>
MetricReport<T> psnr(const Tensor3<T>& x, const Tensor3<T>& y, T peak = T(1)) {
  if (!x.same_shape(y)) throw dim_error("psnr: shape mismatch");
  if (!(peak > T(0))) throw precondition_error("psnr: peak must be positive");
  MetricReport<T> report;
  const std::size_t count = x.n1() * x.n2();
  T acc{};
  for (std::size_t k = 0; k < x.n3(); ++k) {
    const T* px = x.slice(k);
    const T* py = y.slice(k);
    T mse{};
    for (std::size_t s = 0; s < count; ++s) {
      const T d = px[s] - py[s];
      mse += d * d;
    }
    mse /= static_cast<T>(count);
    const T band = mse == T(0) ? std::numeric_limits<T>::infinity()
                               : T(10) * std::log10(peak * peak / mse);
    report.psnr_per_band.push_back(band);
    acc += band;
  }
  report.psnr = acc / static_cast<T>(x.n3());
  return report;
}

namespace detail_ssim {

template <typename T>
std::vector<T> gaussian_window(std::size_t size, T sigma) {
  std::vector<T> w(size * size);
  const T c = static_cast<T>(size - 1) / T(2);
  T total{};
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const T di = static_cast<T>(i) - c;
      const T dj = static_cast<T>(j) - c;
      w[i * size + j] = std::exp(-(di * di + dj * dj) / (T(2) * sigma * sigma));
      total += w[i * size + j];
    }
  }
  for (T& v : w) v /= total;
  return w;
}

}  // namespace detail_ssim

/// Mean local SSIM per band with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1; averaged over bands. Windows are
/// evaluated at fully interior positions only.
template <typename T>
MetricReport<T> ssim(const Tensor3<T>& x, const Tensor3<T>& y) {
  if (!x.same_shape(y)) throw dim_error("ssim: shape mismatch");
  constexpr std::size_t kWin = 11;
  if (x.n1() < kWin || x.n2() < kWin) {
    throw dim_error("ssim: bands smaller than the 11x11 window");
  }
  const T c1 = T(0.01) * T(0.01);
  const T c2 = T(0.03) * T(0.03);
  static const std::vector<T> window = detail_ssim::gaussian_window<T>(kWin, T(1.5));

  MetricReport<T> report;
  T acc{};
  for (std::size_t k = 0; k < x.n3(); ++k) {
    T band{};
    std::size_t positions = 0;
    for (std::size_t i0 = 0; i0 + kWin <= x.n1(); ++i0) {
      for (std::size_t j0 = 0; j0 + kWin <= x.n2(); ++j0) {
        T mx{}, my{}, xx{}, yy{}, xy{};
        for (std::size_t a = 0; a < kWin; ++a) {
          for (std::size_t b = 0; b < kWin; ++b) {
            const T wgt = window[a * kWin + b];
            const T vx = x(i0 + a, j0 + b, k);
            const T vy = y(i0 + a, j0 + b, k);
            mx += wgt * vx;
            my += wgt * vy;
            xx += wgt * vx * vx;
            yy += wgt * vy * vy;
            xy += wgt * vx * vy;
          }
        }
        const T sx = xx - mx * mx;
        const T sy = yy - my * my;
        const T sxy = xy - mx * my;
        const T val = ((T(2) * mx * my + c1) * (T(2) * sxy + c2)) /
                      ((mx * mx + my * my + c1) * (sx + sy + c2));
        band += val;
        ++positions;
      }
    }
    band /= static_cast<T>(positions);
    report.ssim_per_band.push_back(band);
    acc += band;
  }
  report.ssim = acc / static_cast<T>(x.n3());
  return report;
}

/// Combined PSNR + SSIM report.
template <typename T>
MetricReport<T> evaluate(const Tensor3<T>& x, const Tensor3<T>& y, T peak = T(1)) {
  MetricReport<T> p = psnr(x, y, peak);
  MetricReport<T> s = ssim(x, y);
  p.ssim = s.ssim;
  p.ssim_per_band = std::move(s.ssim_per_band);
  return p;
}

}  // namespace otlrm
