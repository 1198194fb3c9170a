#pragma once

// Integer-order Bessel functions of the first kind and a unitary DFT.

#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "wsdrive/error.hpp"

namespace wsdrive {

using complex = std::complex<double>;

inline constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// ---------------------------------------------------------------------------
// Bessel functions
// ---------------------------------------------------------------------------

// Order beyond which |J_k(z)| is below the 1e-12 error budget: the
// turning point |z| plus an Airy-tail margin.
inline int bessel_truncation_order(double z) {
  const double a = std::abs(z);
  return static_cast<int>(std::ceil(a + 10.0 * std::cbrt(a) + 20.0));
}

inline constexpr double bessel_argument_limit = 1e6;
inline constexpr double bessel_series_threshold = 1e-3;

namespace detail {

// J_0..J_kmax at a >= 0.
inline std::vector<double> bessel_series(int kmax, double a) {
  std::vector<double> out(kmax + 1, 0.0);
  const double half = 0.5 * a;
  const double q = -half * half;
  double lead = 1.0;  // (a/2)^k / k!
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) lead *= half / k;
    if (lead < 1e-300) break;
    double term = lead, sum = lead;
    for (int m = 1; m < 30; ++m) {
      term *= q / (double(m) * double(m + k));
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    out[k] = sum;
  }
  return out;
}

// Miller's backward recurrence, normalised with J_0 + 2 sum J_{2k} = 1.
inline std::vector<double> bessel_miller(int kmax, double a) {
  int start = std::max(kmax, bessel_truncation_order(a)) + 20;
  if (start % 2) ++start;

  std::vector<double> out(kmax + 1, 0.0);
  double next = 0.0;    // j_{k+1}
  double cur = 1e-30;   // j_k
  double norm = 0.0;
  const double two_over_a = 2.0 / a;
  for (int k = start; k >= 1; --k) {
    if (k <= kmax) out[k] = cur;
    if (k % 2 == 0) norm += 2.0 * cur;
    const double prev = k * two_over_a * cur - next;
    next = cur;
    cur = prev;
    if (std::abs(cur) > 1e250) {
      cur *= 1e-250;
      next *= 1e-250;
      norm *= 1e-250;
      for (int j = k; j <= kmax; ++j) out[j] *= 1e-250;
    }
  }
  out[0] = cur;
  norm += cur;
  for (double& v : out) v /= norm;
  return out;
}

// J_0..J_kmax(z) for any real z.
inline std::vector<double> bessel_nonnegative_orders(int kmax, double z) {
  const double a = std::abs(z);
  std::vector<double> out;
  if (a == 0.0) {
    out.assign(kmax + 1, 0.0);
    out[0] = 1.0;
  } else if (a < bessel_series_threshold) {
    out = bessel_series(kmax, a);
  } else {
    out = bessel_miller(kmax, a);
  }
  if (z < 0.0)
    for (int k = 1; k <= kmax; k += 2) out[k] = -out[k];
  return out;
}

}  // namespace detail

inline double bessel_jn(int k, double z) {
  if (!(std::abs(z) < bessel_argument_limit))
    throw ValidationError("bessel_jn: |z| must be below 1e6");
  const int order = std::abs(k);
  if (order > bessel_truncation_order(z)) return 0.0;
  const double v = detail::bessel_nonnegative_orders(order, z)[order];
  return (k < 0 && (order % 2)) ? -v : v;
}

// J_k(z) for k in [-K, K], filled from one recurrence pass.
class BesselRow {
public:
  BesselRow(int max_order, double z, std::vector<double> values)
      : max_order_(max_order), z_(z), values_(std::move(values)) {}

  int max_order() const { return max_order_; }
  double argument() const { return z_; }
  double at(int k) const { return std::abs(k) > max_order_ ? 0.0 : values_[k + max_order_]; }
  std::span<const double> values() const { return values_; }

private:
  int max_order_;
  double z_;
  std::vector<double> values_;  // index k + K
};

inline BesselRow bessel_row(int max_order, double z) {
  if (!(std::abs(z) < bessel_argument_limit))
    throw ValidationError("bessel_row: |z| must be below 1e6");
  const int needed = bessel_truncation_order(z);
  if (max_order < needed)
    throw ValidationError("bessel_row: order window " + std::to_string(max_order) +
                          " too small for z = " + std::to_string(z) + ", need K >= " +
                          std::to_string(needed));
  const auto positive = detail::bessel_nonnegative_orders(max_order, z);
  std::vector<double> values(2 * max_order + 1);
  for (int k = 0; k <= max_order; ++k) {
    values[max_order + k] = positive[k];
    values[max_order - k] = (k % 2) ? -positive[k] : positive[k];
  }
  return BesselRow(max_order, z, std::move(values));
}

// ---------------------------------------------------------------------------
// Discrete Fourier transform
// ---------------------------------------------------------------------------

enum class Direction { forward, inverse };

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Reusable in-place unitary transform of a fixed power-of-two length.
// Forward uses exp(-2 pi i jk/N); both directions scale by 1/sqrt(N).
class FftPlan {
public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (!is_power_of_two(n))
      throw ValidationError("dft: length " + std::to_string(n) + " is not a power of two");
    std::vector<complex> scratch(n);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    const int len = static_cast<int>(n);
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_1d(len, p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse_ = fftw_plan_dft_1d(len, p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  FftPlan(FftPlan&& other) noexcept
      : n_(other.n_), forward_(other.forward_), inverse_(other.inverse_) {
    other.forward_ = other.inverse_ = nullptr;
  }
  FftPlan& operator=(FftPlan&&) = delete;

  ~FftPlan() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (inverse_) fftw_destroy_plan(inverse_);
  }

  std::size_t size() const { return n_; }

  void transform(std::span<complex> data, Direction dir) const {
    if (data.size() != n_) throw ValidationError("dft: buffer length does not match plan");
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(dir == Direction::forward ? forward_ : inverse_, p, p);
    const double scale = 1.0 / std::sqrt(double(n_));
    for (auto& v : data) v *= scale;
  }

private:
  std::size_t n_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

inline std::vector<complex> dft(std::span<const complex> values, Direction dir) {
  std::vector<complex> out(values.begin(), values.end());
  FftPlan plan(out.size());
  plan.transform(out, dir);
  return out;
}

// Angular wavenumber of FFT bin j for N points at spacing dx.
inline double fft_wavenumber(std::size_t j, std::size_t n, double dx) {
  const long s = j < n / 2 ? long(j) : long(j) - long(n);
  return 2.0 * M_PI * double(s) / (double(n) * dx);
}

}  // namespace wsdrive
