// Band structure, Wannier envelopes and Wannier-Stark states.
//
// Oracles: a finite-difference discretisation of one lattice cell with Bloch
// boundary conditions (independent of the plane-wave basis), the free-particle
// dispersion E = q^2, and dense diagonalisation of the tilted site
// Hamiltonian.

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "wsdrive/lattice.hpp"

using namespace wsdrive;

namespace {

constexpr double pi = std::numbers::pi;

// Lowest eigenvalue of -(1/pi^2) d^2 + V0 sin^2(pi x) on one cell, with
// psi(x + 1) = e^{i pi q} psi(x); fourth-order central differences.
double fd_band_energy(double q, double depth, int n = 400) {
  const double h = 1.0 / n;
  const std::complex<double> bloch = std::polar(1.0, pi * q);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(n, n);
  const double c = 1.0 / (pi * pi * 12.0 * h * h);
  const double stencil[5] = {1.0, -16.0, 30.0, -16.0, 1.0};
  for (int i = 0; i < n; ++i) {
    const double x = i * h;
    H(i, i) += depth * std::sin(pi * x) * std::sin(pi * x);
    for (int s = -2; s <= 2; ++s) {
      int j = i + s;
      std::complex<double> phase = 1.0;
      if (j < 0) j += n, phase = std::conj(bloch);
      if (j >= n) j -= n, phase = bloch;
      H(i, j) += c * stencil[s + 2] * phase;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

LatticeConfig depth(double v0) {
  LatticeConfig c;
  c.lattice_depth = v0;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Bands
// ---------------------------------------------------------------------------

TEST(Band, FreeParticleDispersion) {
  for (double q : {-1.0, -0.6, 0.0, 0.3, 0.99}) EXPECT_NEAR(band_energy(q, 0.0), q * q, 1e-12);
}

TEST(Band, MatchesFiniteDifferenceCell) {
  for (double v0 : {2.0, 8.0, 15.0})
    for (double q : {0.0, 0.5, 1.0})
      EXPECT_NEAR(band_energy(q, v0), fd_band_energy(q, v0), 2e-6) << "V0=" << v0 << " q=" << q;
}

TEST(Band, HoppingAtEightRecoils) {
  const auto band = band_structure(depth(8.0), 21);
  const auto fit = hopping_from_band(band);
  const double width = fd_band_energy(1.0, 8.0) - fd_band_energy(0.0, 8.0);
  EXPECT_NEAR(fit.hopping, width / 4.0, 0.01 * width / 4.0);
  EXPECT_NEAR(fit.hopping, 0.03082, 5e-5);
  EXPECT_TRUE(fit.tight_binding_valid);
  EXPECT_LT(fit.relative_residual, 0.02);
}

TEST(Band, ShallowLatticeFlagged) {
  const auto fit = hopping_from_band(band_structure(depth(0.0), 21));
  EXPECT_FALSE(fit.tight_binding_valid);
}

TEST(Band, PlaneWaveConvergence) {
  const double a = band_energy(0.3, 8.0, 11), b = band_energy(0.3, 8.0, 41);
  EXPECT_NEAR(a, b, 1e-9);
}

TEST(Band, RejectsBadInputs) {
  EXPECT_THROW(band_structure(depth(8.0), 10), ValidationError);
  EXPECT_THROW(band_structure(depth(-1.0), 21), ValidationError);
  EXPECT_THROW(band_structure(depth(8.0), 21, 2), ValidationError);
}

// ---------------------------------------------------------------------------
// Wannier envelopes
// ---------------------------------------------------------------------------

TEST(Wannier, NormalisedAndOrthogonal) {
  const auto env = wannier_envelope(depth(8.0), EnvelopeModel::numeric);
  const int pps = env.points_per_site;
  double norm = 0.0, overlap = 0.0;
  for (std::size_t j = 0; j < env.values.size(); ++j) {
    norm += env.values[j] * env.values[j];
    if (j + pps < env.values.size()) overlap += env.values[j] * env.values[j + pps];
  }
  EXPECT_NEAR(norm / pps, 1.0, 1e-10);
  EXPECT_LT(std::abs(overlap / pps), 1e-6);
}

TEST(Wannier, GaussianCloseToNumericInDeepLattice) {
  const auto num = wannier_envelope(depth(8.0), EnvelopeModel::numeric);
  const auto gau = wannier_envelope(depth(8.0), EnvelopeModel::gaussian);
  double ov = 0.0, ng = 0.0;
  for (std::size_t j = 0; j < num.values.size(); ++j) {
    ov += num.values[j] * gau.values[j];
    ng += gau.values[j] * gau.values[j];
  }
  EXPECT_NEAR(ng / gau.points_per_site, 1.0, 1e-10);
  EXPECT_GT(std::abs(ov) / num.points_per_site, 0.99);
}

TEST(Wannier, EvenAndCentred) {
  const auto env = wannier_envelope(depth(8.0), EnvelopeModel::numeric);
  const std::size_t n = env.values.size();
  for (std::size_t j = 0; j < n / 2; ++j) EXPECT_NEAR(env.values[j], env.values[n - 1 - j], 1e-10);
  EXPECT_DOUBLE_EQ(env.position(n / 2), 0.0);
}

TEST(Wannier, RejectsCoarseGrid) {
  EXPECT_THROW(wannier_envelope(depth(8.0), EnvelopeModel::numeric, 8), ValidationError);
}

// ---------------------------------------------------------------------------
// Wannier-Stark states
// ---------------------------------------------------------------------------

TEST(WannierStark, TightBindingEigenvector) {
  const double J = 247.2, nu = 574.11;
  const int L = 61, c = L / 2;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    H(i, i) = nu * (i - c);
    if (i + 1 < L) H(i, i + 1) = H(i + 1, i) = -J;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  int best = 0;
  for (int k = 0; k < L; ++k)
    if (std::abs(es.eigenvectors()(c, k)) > std::abs(es.eigenvectors()(c, best))) best = k;
  Eigen::VectorXd v = es.eigenvectors().col(best);
  if (v(c) < 0) v = -v;
  EXPECT_NEAR(es.eigenvalues()(best), 0.0, 1e-9);
  const auto ws = ws_state(J, nu, 0);
  for (int m = -10; m <= 10; ++m) EXPECT_NEAR(ws.at_site(m), v(c + m), 1e-12) << "m=" << m;
  EXPECT_NEAR(ws_argument(J, nu), 0.8612, 1e-4);
}

TEST(WannierStark, BandModelDiagonalisesSingleBand) {
  // H_mn = eps_{m-n} + n F with eps_k the Fourier coefficients of E(q).
  const double v0 = 8.0;
  const double F = lattice_scales(depth(v0)).tilt;
  const int samples = 2048, harmonics = 8;
  std::vector<double> eps(harmonics + 1, 0.0);
  for (int j = 0; j < samples; ++j) {
    const double q = -1.0 + 2.0 * (j + 0.5) / samples;
    const double e = band_energy(q, v0);
    for (int k = 0; k <= harmonics; ++k) eps[k] += e * std::cos(pi * k * q) / samples;
  }
  const int L = 41, c = L / 2;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    H(i, i) = F * (i - c);
    for (int k = 1; k <= harmonics; ++k)
      if (i + k < L) H(i, i + k) = H(i + k, i) = eps[k];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  int best = 0;
  for (int k = 0; k < L; ++k)
    if (std::abs(es.eigenvectors()(c, k)) > std::abs(es.eigenvectors()(c, best))) best = k;
  Eigen::VectorXd v = es.eigenvectors().col(best);
  if (v(c) < 0) v = -v;
  const auto ws = ws_state_from_band(v0, F, 0);
  for (int m = -8; m <= 8; ++m) EXPECT_NEAR(std::abs(ws.at_site(m)), std::abs(v(c + m)), 1e-8) << "m=" << m;
}

TEST(WannierStark, BasisWithoutTiltIsPlainWannier) {
  auto cfg = depth(8.0);
  cfg.gravity = 0.0;
  const auto b = build_site_basis(cfg);
  EXPECT_EQ(b.ws.coefficients.size(), 1u);
  EXPECT_THROW(ws_state(247.0, 0.0, 0), ValidationError);
}

TEST(WannierStark, RenderedStateNormalised) {
  const auto b = build_site_basis(depth(8.0));
  std::vector<complex> one{1.0};
  const auto sites = ws_to_site_amplitudes(one, b.ws);
  const int first = -b.ws.reach();
  const int extent = b.ws.reach() + b.envelope.half_width + 1;
  const std::size_t pts = std::size_t(2 * extent * b.envelope.points_per_site + 1);
  const auto psi = render_sites(sites, first, b.envelope, -extent, pts);
  double n = 0.0;
  for (const auto& v : psi) n += std::norm(v);
  EXPECT_NEAR(n / b.envelope.points_per_site, 1.0, 1e-6);
  EXPECT_THROW(render_sites(sites, first, b.envelope, -extent + 0.01, pts), ValidationError);
}
