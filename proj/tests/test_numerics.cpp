// Bessel functions and the unitary DFT.
//
// Oracles: libstdc++ std::cyl_bessel_j (moderate z only, it loses all
// accuracy near k ~ z for z in the hundreds), a long double power series
// J_k(z) = sum_m (-1)^m (z/2)^{2m+k} / (m! (m+k)!), the trapezoid rule on
// J_k(z) = (1/2pi) Int_0^{2pi} cos(k t - z sin t) dt (spectrally accurate for
// a periodic integrand), the addition theorem sum_k J_k^2 = 1, and an O(N^2)
// direct DFT.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "wsdrive/numerics.hpp"

using namespace wsdrive;

namespace {

long double series_jn(int k, long double z) {
  long double term = 1.0L;
  for (int i = 1; i <= k; ++i) term *= z / (2.0L * i);
  long double sum = term;
  const long double q = -(z * z) / 4.0L;
  for (int m = 1; m < 400; ++m) {
    term *= q / (long double)(m * (m + k));
    sum += term;
    if (std::fabs(term) < 1e-30L) break;
  }
  return sum;
}

double integral_jn(int k, double z) {
  const int n = 4 * int(std::abs(z) + std::abs(k)) + 256;
  long double acc = 0.0L;
  for (int j = 0; j < n; ++j) {
    const long double t = 2.0L * std::numbers::pi_v<long double> * j / n;
    acc += std::cos((long double)k * t - (long double)z * std::sin(t));
  }
  return double(acc / n);
}

std::vector<complex> direct_dft(const std::vector<complex>& x, double sign) {
  const std::size_t n = x.size();
  std::vector<complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    complex acc{};
    for (std::size_t j = 0; j < n; ++j)
      acc += x[j] * std::polar(1.0, sign * 2.0 * std::numbers::pi * double((j * k) % n) / double(n));
    out[k] = acc / std::sqrt(double(n));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Bessel
// ---------------------------------------------------------------------------

TEST(Bessel, MatchesPowerSeriesSmallArguments) {
  for (double z : {1e-8, 1e-4, 0.3, 0.861, 2.5, 7.0, 12.0})
    for (int k = 0; k <= 30; ++k)
      EXPECT_NEAR(bessel_jn(k, z), double(series_jn(k, z)), 1e-13) << "k=" << k << " z=" << z;
}

TEST(Bessel, MatchesStdLibraryModerateArguments) {
  for (double z : {15.0, 25.0, 60.0})
    for (int k : {0, 1, 2, 17, int(z) - 3, int(z) + 5, int(z) + 30}) {
      const double ref = std::cyl_bessel_j(double(k), z);
      EXPECT_NEAR(bessel_jn(k, z), ref, 1e-12) << "k=" << k << " z=" << z;
    }
}

TEST(Bessel, MatchesIntegralLargeArguments) {
  for (double z : {83.6, 250.0, 1200.0, 9000.0})
    for (int k : {0, 1, 2, 17, int(z) / 2, int(z) - 3, int(z), int(z) + 5, int(z) + 40}) {
      EXPECT_NEAR(bessel_jn(k, z), integral_jn(k, z), 1e-12) << "k=" << k << " z=" << z;
    }
}

TEST(Bessel, NegativeOrderAndArgumentParity) {
  for (double z : {0.5, 3.0, 40.0})
    for (int k = 0; k < 12; ++k) {
      const double sign = (k % 2) ? -1.0 : 1.0;
      EXPECT_NEAR(bessel_jn(-k, z), sign * bessel_jn(k, z), 1e-15);
      EXPECT_NEAR(bessel_jn(k, -z), sign * bessel_jn(k, z), 1e-15);
    }
}

TEST(Bessel, ZeroArgument) {
  EXPECT_EQ(bessel_jn(0, 0.0), 1.0);
  EXPECT_EQ(bessel_jn(3, 0.0), 0.0);
}

TEST(Bessel, RowSumsToOne) {
  for (double z : {0.0, 0.861, 10.0, 83.6, 600.0, 5000.0}) {
    const auto row = bessel_row(bessel_truncation_order(z), z);
    double s = 0.0;
    for (double v : row.values()) s += v * v;
    EXPECT_NEAR(s, 1.0, 1e-12) << "z=" << z;
  }
}

TEST(Bessel, RowAgreesWithScalar) {
  const double z = 47.3;
  const auto row = bessel_row(120, z);
  for (int k = -120; k <= 120; k += 7) EXPECT_NEAR(row.at(k), bessel_jn(k, z), 1e-14);
  EXPECT_EQ(row.at(500), 0.0);
}

TEST(Bessel, TruncationTailBelowBudget) {
  for (double z : {1.0, 30.0, 300.0}) {
    const int K = bessel_truncation_order(z);
    EXPECT_LT(std::abs(std::cyl_bessel_j(double(K + 1), z)), 1e-12);
  }
}

TEST(Bessel, SmallWindowNamesRequiredOrder) {
  try {
    bessel_row(5, 40.0);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(bessel_truncation_order(40.0))), std::string::npos) << msg;
  }
}

TEST(Bessel, HugeArgumentRejected) {
  EXPECT_THROW(bessel_jn(0, 2e6), ValidationError);
  EXPECT_THROW(bessel_row(10, std::nan("")), ValidationError);
}

// ---------------------------------------------------------------------------
// DFT
// ---------------------------------------------------------------------------

TEST(Dft, MatchesDirectSum) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (std::size_t n : {1u, 2u, 8u, 64u, 256u}) {
    std::vector<complex> x(n);
    for (auto& v : x) v = {g(rng), g(rng)};
    const auto fwd = dft(x, Direction::forward);
    const auto inv = dft(x, Direction::inverse);
    const auto ref_fwd = direct_dft(x, -1.0);
    const auto ref_inv = direct_dft(x, +1.0);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(std::abs(fwd[k] - ref_fwd[k]), 0.0, 1e-12);
      EXPECT_NEAR(std::abs(inv[k] - ref_inv[k]), 0.0, 1e-12);
    }
  }
}

TEST(Dft, UnitaryRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<complex> x(1024);
  double norm = 0.0;
  for (auto& v : x) {
    v = {u(rng), u(rng)};
    norm += std::norm(v);
  }
  FftPlan plan(x.size());
  auto y = x;
  plan.transform(y, Direction::forward);
  double norm_y = 0.0;
  for (const auto& v : y) norm_y += std::norm(v);
  EXPECT_NEAR(norm_y, norm, 1e-10 * norm);
  plan.transform(y, Direction::inverse);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(y[i] - x[i]), 0.0, 1e-13);
}

TEST(Dft, RejectsNonPowerOfTwo) {
  std::vector<complex> x(12);
  EXPECT_THROW(dft(x, Direction::forward), ValidationError);
  FftPlan plan(16);
  EXPECT_THROW(plan.transform(x, Direction::forward), ValidationError);
}

TEST(Dft, Wavenumbers) {
  EXPECT_DOUBLE_EQ(fft_wavenumber(1, 8, 0.5), 2.0 * std::numbers::pi / 4.0);
  EXPECT_DOUBLE_EQ(fft_wavenumber(7, 8, 0.5), -2.0 * std::numbers::pi / 4.0);
  EXPECT_EQ(next_power_of_two(300), 512u);
  EXPECT_TRUE(is_power_of_two(64));
  EXPECT_FALSE(is_power_of_two(0));
}
