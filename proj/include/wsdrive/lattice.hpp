#pragma once

// Single-particle basis of the lattice: lowest-band dispersion, tight-binding
// hopping, Wannier envelope and Wannier-Stark states of the tilted lattice.
//
// Potential V0 sin^2(k x) with minima at integer sites.  Inside this module
// lengths are in sites, quasimomenta in units of hbar k (Brillouin zone
// [-1, 1)) and energies in E_R.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wsdrive/error.hpp"
#include "wsdrive/numerics.hpp"
#include "wsdrive/units.hpp"

namespace wsdrive {

struct BandStructure {
  std::vector<double> quasimomentum;  // hbar k units, uniform on [-1, 1)
  std::vector<double> energy;         // lowest band, E_R
  int plane_waves = 0;
  double depth = 0.0;                 // E_R
};

struct BlochState {
  double energy = 0.0;
  // Coefficients of exp(i (q + 2l) k x) for l = -L..L; real, sum positive.
  Eigen::VectorXd coefficients;
};

namespace detail {

// Lowest eigenpair of the plane-wave Hamiltonian at quasimomentum q.  The
// matrix is tridiagonal: (q + 2l)^2 + V0/2 on the diagonal, -V0/4 beside it.
inline BlochState lowest_bloch_state(double q, double depth, int plane_waves, bool vectors) {
  const int half = plane_waves / 2;
  Eigen::VectorXd diag(plane_waves), sub(plane_waves - 1);
  for (int i = 0; i < plane_waves; ++i) {
    const double p = q + 2.0 * (i - half);
    diag(i) = p * p + 0.5 * depth;
  }
  sub.setConstant(-0.25 * depth);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericError("band_structure: eigen-solve failed at q = " + std::to_string(q));
  BlochState s;
  s.energy = solver.eigenvalues()(0);
  if (vectors) {
    s.coefficients = solver.eigenvectors().col(0);
    if (s.coefficients.sum() < 0.0) s.coefficients = -s.coefficients;
  }
  return s;
}

}  // namespace detail

inline BandStructure band_structure(const LatticeConfig& cfg, int plane_waves, int q_points = 64) {
  if (plane_waves < 11 || plane_waves % 2 == 0)
    throw ValidationError("band_structure: plane wave count must be odd and >= 11");
  if (!(cfg.lattice_depth >= 0.0)) throw ValidationError("band_structure: depth must be >= 0");
  if (q_points < 4) throw ValidationError("band_structure: need at least 4 quasimomenta");

  BandStructure band;
  band.plane_waves = plane_waves;
  band.depth = cfg.lattice_depth;
  double residual = 0.0;
  for (int j = 0; j < q_points; ++j) {
    const double q = -1.0 + 2.0 * j / q_points;
    const double e = detail::lowest_bloch_state(q, cfg.lattice_depth, plane_waves, false).energy;
    const double ref = detail::lowest_bloch_state(q, cfg.lattice_depth, plane_waves + 10, false).energy;
    residual = std::max(residual, std::abs(e - ref));
    band.quasimomentum.push_back(q);
    band.energy.push_back(e);
  }
  if (residual > 1e-8)
    throw NumericError("band_structure: not converged with " + std::to_string(plane_waves) +
                       " plane waves, residual " + std::to_string(residual) + " E_R");
  return band;
}

inline double band_energy(double q, double depth, int plane_waves = 21) {
  return detail::lowest_bloch_state(q, depth, plane_waves, false).energy;
}

struct HoppingFit {
  double hopping = 0.0;        // J, E_R
  double offset = 0.0;         // band centre eps0, E_R
  double rms_residual = 0.0;   // of E(q) - (eps0 - 2J cos(pi q)), E_R
  double relative_residual = 0.0;  // rms residual / bandwidth
  bool tight_binding_valid = false;
};

// Nearest-neighbour description E(q) ~ eps0 - 2 J cos(pi q); J is a quarter
// of the bandwidth.
inline HoppingFit hopping_from_band(const BandStructure& band) {
  const auto [lo, hi] = std::minmax_element(band.energy.begin(), band.energy.end());
  HoppingFit fit;
  const double width = *hi - *lo;
  fit.hopping = 0.25 * width;
  double mean = 0.0;
  for (std::size_t i = 0; i < band.energy.size(); ++i)
    mean += band.energy[i] + 2.0 * fit.hopping * std::cos(std::numbers::pi * band.quasimomentum[i]);
  fit.offset = mean / band.energy.size();
  double ss = 0.0;
  for (std::size_t i = 0; i < band.energy.size(); ++i) {
    const double model = fit.offset - 2.0 * fit.hopping * std::cos(std::numbers::pi * band.quasimomentum[i]);
    ss += (band.energy[i] - model) * (band.energy[i] - model);
  }
  fit.rms_residual = std::sqrt(ss / band.energy.size());
  fit.relative_residual = width > 0.0 ? fit.rms_residual / width : 0.0;
  fit.tight_binding_valid = width > 0.0 && fit.relative_residual < 0.02;
  return fit;
}

enum class EnvelopeModel { gaussian, numeric };

inline std::string to_string(EnvelopeModel m) { return m == EnvelopeModel::gaussian ? "gaussian" : "numeric"; }

// Real, even, L2-normalised Wannier envelope sampled at points_per_site
// points per site on [-half_width, half_width] sites.
struct WannierEnvelope {
  EnvelopeModel model = EnvelopeModel::numeric;
  int points_per_site = 32;
  int half_width = 8;  // sites
  std::vector<double> values;  // size 2 * half_width * points_per_site + 1

  double position(std::size_t j) const {
    return (double(j) - double(half_width * points_per_site)) / points_per_site;
  }
  double spacing() const { return 1.0 / points_per_site; }
};

inline WannierEnvelope wannier_envelope(const LatticeConfig& cfg, EnvelopeModel model,
                                        int points_per_site = 32, int half_width = 8,
                                        int plane_waves = 21) {
  if (points_per_site < 16) throw ValidationError("wannier_envelope: points_per_site must be >= 16");
  if (half_width < 2) throw ValidationError("wannier_envelope: half width must be >= 2 sites");
  WannierEnvelope env;
  env.model = model;
  env.points_per_site = points_per_site;
  env.half_width = half_width;
  const std::size_t n = 2 * half_width * points_per_site + 1;
  env.values.assign(n, 0.0);
  const double depth = cfg.lattice_depth;

  if (model == EnvelopeModel::gaussian) {
    if (!(depth > 0.0)) throw ValidationError("wannier_envelope: gaussian model needs depth > 0");
    // Harmonic approximation of one well: x0 = d / (pi V0^(1/4)).
    const double x0 = 1.0 / (std::numbers::pi * std::pow(depth, 0.25));
    for (std::size_t j = 0; j < n; ++j) {
      const double x = env.position(j);
      env.values[j] = std::exp(-0.5 * x * x / (x0 * x0));
    }
  } else {
    // Sum of lowest-band Bloch functions over a midpoint quasimomentum grid
    // (symmetric under q -> -q, so the result is real and even).
    const int q_points = 8 * half_width;
    const int half = plane_waves / 2;
    for (int iq = 0; iq < q_points; ++iq) {
      const double q = -1.0 + (2.0 * iq + 1.0) / q_points;
      const auto s = detail::lowest_bloch_state(q, depth, plane_waves, true);
      for (std::size_t j = 0; j < n; ++j) {
        const double x = env.position(j);
        double acc = 0.0;
        for (int l = 0; l < plane_waves; ++l)
          acc += s.coefficients(l) * std::cos(std::numbers::pi * (q + 2.0 * (l - half)) * x);
        env.values[j] += acc;
      }
    }
    const double peak = std::abs(env.values[n / 2]);
    const double tail = std::max(std::abs(env.values.front()), std::abs(env.values.back()));
    if (!(peak > 0.0) || tail > 1e-5 * peak)
      throw NumericError("wannier_envelope: numeric Wannier function does not localise (tail/peak = " +
                         std::to_string(tail / peak) + ")");
  }

  double norm = 0.0;
  for (double v : env.values) norm += v * v;
  norm = std::sqrt(norm * env.spacing());
  for (double& v : env.values) v /= norm;
  return env;
}

// Site amplitudes of a Wannier-Stark state, stored as offsets from its centre.
struct WsState {
  int center = 0;
  std::vector<double> coefficients;  // offset k = -K..K at index k + K

  int reach() const { return static_cast<int>(coefficients.size() / 2); }
  int first_site() const { return center - reach(); }
  double at_site(int m) const {
    const int k = m - center;
    return std::abs(k) > reach() ? 0.0 : coefficients[k + reach()];
  }
};

// Argument of the tight-binding Wannier-Stark Bessel profile: 2J / (h nu_B),
// for H = n h nu_B - J (|n><n+1| + h.c.).
inline double ws_argument(double hopping_hz, double bloch_hz) { return 2.0 * hopping_hz / bloch_hz; }

// Tight-binding Wannier-Stark state: coefficient at site m is J_{m-n}(2J/(h nu_B)).
inline WsState ws_state(double hopping_hz, double bloch_hz, int center) {
  if (!(bloch_hz > 0.0))
    throw ValidationError("ws_state: no Wannier-Stark ladder without a tilt; use plain Wannier states");
  const double x = ws_argument(hopping_hz, bloch_hz);
  const auto row = bessel_row(bessel_truncation_order(x), x);
  WsState s;
  s.center = center;
  s.coefficients.assign(row.values().begin(), row.values().end());
  return s;
}

// Single-band Wannier-Stark state of the full lowest band (beyond nearest
// neighbours): c_k = (1/2pi) Int e^{-ik theta} exp(-(i/F) Int_0^theta (E - Ebar)).
// Real up to a global phase for the even band; returned as real coefficients.
inline WsState ws_state_from_band(double depth, double tilt, int center, int reach = 0,
                                  int plane_waves = 21) {
  if (!(tilt > 0.0)) throw ValidationError("ws_state_from_band: tilt must be positive");
  const int samples = 512;
  std::vector<double> energy(samples);
  for (int j = 0; j < samples; ++j)
    energy[j] = band_energy(-1.0 + 2.0 * j / samples, depth, plane_waves);

  // Cosine series of the band; theta = pi q.
  const int harmonics = 32;
  std::vector<double> eps(harmonics + 1, 0.0);
  for (int h = 1; h <= harmonics; ++h) {
    double acc = 0.0;
    for (int j = 0; j < samples; ++j)
      acc += energy[j] * std::cos(h * std::numbers::pi * (-1.0 + 2.0 * j / samples));
    eps[h] = 2.0 * acc / samples;
  }

  const int grid = 1024;
  std::vector<complex> f(grid);
  for (int j = 0; j < grid; ++j) {
    const double theta = 2.0 * std::numbers::pi * j / grid;
    double phase = 0.0;
    for (int h = 1; h <= harmonics; ++h) phase += eps[h] * std::sin(h * theta) / h;
    f[j] = std::exp(complex(0.0, -phase / tilt));
  }
  // Forward DFT gives sum_j f_j e^{-ik theta_j}.
  const auto c = dft(f, Direction::forward);
  const double scale = 1.0 / std::sqrt(double(grid));

  if (reach <= 0) {
    double w = 0.0;
    for (int h = 1; h <= harmonics; ++h) w += std::abs(eps[h]);
    reach = bessel_truncation_order(w / tilt);
  }
  WsState s;
  s.center = center;
  s.coefficients.resize(2 * reach + 1);
  double norm = 0.0;
  for (int k = -reach; k <= reach; ++k) {
    const complex v = c[(k + grid) % grid] * scale;
    s.coefficients[k + reach] = v.real();
    norm += v.real() * v.real();
  }
  norm = std::sqrt(norm);
  for (double& v : s.coefficients) v /= norm;
  return s;
}

enum class WsModel { tight_binding, band };

struct BasisOptions {
  EnvelopeModel envelope = EnvelopeModel::numeric;
  WsModel ws_model = WsModel::tight_binding;
  int points_per_site = 32;
  int envelope_half_width = 8;
  int plane_waves = 21;
};

// Everything needed to render site amplitudes in real or momentum space.
struct SiteBasis {
  WannierEnvelope envelope;
  HoppingFit hopping;          // J in E_R
  double hopping_hz = 0.0;     // J / h
  double bloch_hz = 0.0;
  WsState ws;                  // centred at site 0; {1} when untilted

  // WS state centred at n is the n = 0 state shifted by n sites.
  double ws_coefficient(int n, int m) const { return ws.at_site(m - n); }
};

inline SiteBasis build_site_basis(const LatticeConfig& cfg, const BasisOptions& opt = {}) {
  SiteBasis b;
  const auto band = band_structure(cfg, opt.plane_waves);
  b.hopping = hopping_from_band(band);
  const auto scales = lattice_scales(cfg);
  b.hopping_hz = b.hopping.hopping * scales.recoil_frequency;
  b.bloch_hz = scales.bloch_frequency;
  b.envelope = wannier_envelope(cfg, opt.envelope, opt.points_per_site, opt.envelope_half_width,
                                opt.plane_waves);
  if (b.bloch_hz > 0.0) {
    b.ws = opt.ws_model == WsModel::band
               ? ws_state_from_band(cfg.lattice_depth, scales.tilt, 0, 0, opt.plane_waves)
               : ws_state(b.hopping_hz, b.bloch_hz, 0);
  } else {
    b.ws.center = 0;
    b.ws.coefficients = {1.0};
  }
  return b;
}

// Convolves amplitudes over WS centres into amplitudes over Wannier sites:
// b_m = sum_n a_n c_{m-n}.  Output starts at first_site - ws.reach().
inline std::vector<complex> ws_to_site_amplitudes(std::span<const complex> ws_amplitudes,
                                                  const WsState& ws) {
  const int r = ws.reach();
  std::vector<complex> out(ws_amplitudes.size() + 2 * r, complex{});
  for (std::size_t n = 0; n < ws_amplitudes.size(); ++n) {
    if (ws_amplitudes[n] == complex{}) continue;
    for (int k = -r; k <= r; ++k) out[n + r + k] += ws_amplitudes[n] * ws.coefficients[k + r];
  }
  return out;
}

// Renders sum_m b_m w(x - m) on a grid x_j = origin + j / pps, j < points.
// The envelope must share the grid's points per site.
inline std::vector<complex> render_sites(std::span<const complex> site_amplitudes, int first_site,
                                         const WannierEnvelope& env, double origin, std::size_t points) {
  std::vector<complex> psi(points, complex{});
  const int pps = env.points_per_site;
  const long hw = long(env.half_width) * pps;
  const double offset = (double(first_site) - origin) * pps;
  const long base = std::lround(offset);
  if (std::abs(offset - double(base)) > 1e-9)
    throw ValidationError("render_sites: grid origin must lie on the sub-site lattice");
  for (std::size_t m = 0; m < site_amplitudes.size(); ++m) {
    const complex a = site_amplitudes[m];
    if (a == complex{}) continue;
    const long centre = base + long(m) * pps;
    for (long j = -hw; j <= hw; ++j) {
      const long idx = centre + j;
      if (idx < 0 || idx >= long(points)) continue;
      psi[idx] += a * env.values[j + hw];
    }
  }
  return psi;
}

}  // namespace wsdrive
