#pragma once

// Split-step Fourier integration of the 1D Schroedinger equation
//
//   i d/dtau psi = [ -(1/pi^2) d^2/dxi^2 + V0 sin^2(pi (xi - xi_m(t))) + F xi ] psi
//
// in lattice units (xi in sites, tau in hbar/E_R, F = h nu_B / E_R).  The
// lattice is displaced by the mirror, xi_m(t) = (A_pp/2) sin(2 pi nu_PZT t + phi0),
// directly in the lab frame.  Independent of the closed-form model; used to
// validate it and to calibrate the effective coupling Omega.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wsdrive/analytic.hpp"
#include "wsdrive/error.hpp"
#include "wsdrive/lattice.hpp"
#include "wsdrive/numerics.hpp"
#include "wsdrive/units.hpp"

namespace wsdrive {

enum class Boundary { absorbing, periodic_tilt_gauge };

inline std::string to_string(Boundary b) {
  return b == Boundary::absorbing ? "absorbing" : "periodic-with-tilt-gauge";
}

struct GridSpec {
  std::size_t sites = 64;           // power of two
  std::size_t points_per_site = 32; // power of two, >= 16
  long origin = -32;                // site coordinate of the first sample
};

struct AbsorberSpec {
  double width = 6.0;      // sites at each edge
  double strength = 0.05;  // peak absorption rate, E_R / hbar
};

struct GridState {
  std::vector<complex> psi;
  double spacing = 1.0 / 32;   // sites
  double origin = -32.0;       // site coordinate of psi[0]
  double time = 0.0;           // s
  AbsorberSpec absorber;

  std::size_t size() const { return psi.size(); }
  double position(std::size_t j) const { return origin + double(j) * spacing; }
  std::size_t points_per_site() const { return std::size_t(std::lround(1.0 / spacing)); }

  double norm() const {
    double s = 0.0;
    for (const auto& v : psi) s += std::norm(v);
    return s * spacing;
  }
  void normalize() {
    const double n = std::sqrt(norm());
    for (auto& v : psi) v /= n;
  }
};

inline GridState make_grid_state(const GridSpec& grid, const std::function<complex(double)>& f) {
  if (!is_power_of_two(grid.sites) || !is_power_of_two(grid.points_per_site) || grid.points_per_site < 16)
    throw ValidationError("grid: sites and points per site must be powers of two, >= 16 points per site");
  GridState s;
  s.spacing = 1.0 / double(grid.points_per_site);
  s.origin = double(grid.origin);
  s.psi.resize(grid.sites * grid.points_per_site);
  for (std::size_t j = 0; j < s.psi.size(); ++j) s.psi[j] = f(s.position(j));
  return s;
}

struct IntegratorConfig {
  double dt = 0.0;               // s; 0 = largest step allowed by the limits below
  Boundary boundary = Boundary::absorbing;
  double amplitude_pp = 0.0;     // sites
  double drive_frequency = 0.0;  // nu_PZT, Hz
  double phase_origin = 0.0;     // rad

  // Mirror displacement in sites.
  double displacement(double t) const {
    return 0.5 * amplitude_pp * std::sin(2.0 * std::numbers::pi * drive_frequency * t + phase_origin);
  }
  // Lattice velocity in sites per second.
  double velocity(double t) const {
    const double w = 2.0 * std::numbers::pi * drive_frequency;
    return 0.5 * amplitude_pp * w * std::cos(w * t + phase_origin);
  }
};

inline constexpr double max_step_recoil = 0.02;   // hbar / E_R
inline constexpr double min_steps_per_drive_cycle = 50.0;

inline double max_time_step(const IntegratorConfig& cfg, const LatticeScales& scales) {
  double dt = max_step_recoil * scales.time_unit;
  if (cfg.drive_frequency > 0.0) dt = std::min(dt, 1.0 / (min_steps_per_drive_cycle * cfg.drive_frequency));
  return dt;
}

inline IntegratorConfig integrator_for(const ValidatedConfig& v, Boundary boundary = Boundary::absorbing) {
  IntegratorConfig c;
  c.boundary = boundary;
  c.amplitude_pp = v.drive.amplitude_pp;
  c.drive_frequency = v.drive_frequency;
  c.phase_origin = v.drive.phase_origin;
  return c;
}

struct EvolveReport {
  std::size_t steps = 0;
  double dt = 0.0;            // s
  double absorbed = 0.0;      // norm removed by the absorber
  bool boundary_flux_warning = false;
};

namespace detail {

inline double lattice_momentum(double sites_per_second, const LatticeScales& scales) {
  // kappa = (pi^2 / 2) d xi / d tau
  return 0.5 * std::numbers::pi * std::numbers::pi * sites_per_second * scales.time_unit;
}

struct Propagator {
  std::size_t n;
  double dxi;
  FftPlan plan;
  std::vector<double> kappa, cos2, sin2, absorb_rate;

  Propagator(const GridState& s, const AbsorberSpec& abs)
      : n(s.size()), dxi(s.spacing), plan(s.size()), kappa(n), cos2(n), sin2(n), absorb_rate(n, 0.0) {
    const double length = double(n) * dxi;
    for (std::size_t j = 0; j < n; ++j) {
      kappa[j] = fft_wavenumber(j, n, dxi);
      const double xi = s.position(j);
      cos2[j] = std::cos(2.0 * std::numbers::pi * xi);
      sin2[j] = std::sin(2.0 * std::numbers::pi * xi);
      const double from_edge = std::min(xi - s.origin, s.origin + length - xi);
      if (abs.width > 0.0 && from_edge < abs.width) {
        const double u = 1.0 - from_edge / abs.width;
        absorb_rate[j] = abs.strength * u * u;
      }
    }
  }

  // V0 sin^2(pi (xi - xm)) = V0 (1 - cos(2 pi xi - 2 pi xm)) / 2
  double lattice(std::size_t j, double depth, double xm) const {
    const double c = std::cos(2.0 * std::numbers::pi * xm), s = std::sin(2.0 * std::numbers::pi * xm);
    return 0.5 * depth * (1.0 - (cos2[j] * c + sin2[j] * s));
  }
};

}  // namespace detail

// Advances `state` in place by `duration` seconds with Strang splitting
// K(dt/2) V(t + dt/2) K(dt/2).  The observer, when given, is called after
// every step with the current state.
inline EvolveReport evolve(GridState& state, const LatticeConfig& lattice, const IntegratorConfig& cfg,
                           double duration, const std::function<void(const GridState&)>& observer = {}) {
  const auto scales = lattice_scales(lattice);
  const std::size_t pps = state.points_per_site();
  if (pps < 16) throw ValidationError("evolve: grid must resolve the lattice with >= 16 points per site");
  const double limit = max_time_step(cfg, scales);
  double dt = cfg.dt > 0.0 ? cfg.dt : limit;
  if (dt > limit * (1.0 + 1e-12))
    throw ValidationError("evolve: time step " + std::to_string(dt) + " s exceeds the limit " +
                          std::to_string(limit) + " s");
  EvolveReport report;
  if (!(duration > 0.0)) return report;
  const std::size_t steps = std::size_t(std::ceil(duration / dt - 1e-9));
  dt = duration / double(steps);
  report.steps = steps;
  report.dt = dt;

  detail::Propagator prop(state, state.absorber);
  const bool gauge = cfg.boundary == Boundary::periodic_tilt_gauge;
  const double dtau = dt / scales.time_unit;
  const double depth = lattice.lattice_depth;
  const double tilt = scales.tilt;
  const double inv_pi2 = 1.0 / (std::numbers::pi * std::numbers::pi);
  const std::size_t n = state.size();

  std::vector<complex> kinetic_half(n);
  auto fill_kinetic = [&](double shift) {
    for (std::size_t j = 0; j < n; ++j) {
      const double k = prop.kappa[j] - shift;
      kinetic_half[j] = std::polar(1.0, -k * k * inv_pi2 * 0.5 * dtau);
    }
  };
  // Absorber as a per-step amplitude factor.
  std::vector<double> absorb(n, 1.0);
  if (!gauge)
    for (std::size_t j = 0; j < n; ++j) absorb[j] = std::exp(-prop.absorb_rate[j] * dtau);

  // Gauge: psi = e^{-i s xi} phi with s = F (tau - tau0), phi periodic.
  double shift = 0.0;
  if (!gauge) fill_kinetic(0.0);

  const double start_norm = state.norm();
  auto& psi = state.psi;
  const double t0 = state.time;
  for (std::size_t step = 0; step < steps; ++step) {
    const double t_mid = t0 + (double(step) + 0.5) * dt;
    if (gauge) fill_kinetic(tilt * (double(step) + 0.25) * dtau - shift);

    prop.plan.transform(psi, Direction::forward);
    for (std::size_t j = 0; j < n; ++j) psi[j] *= kinetic_half[j];
    prop.plan.transform(psi, Direction::inverse);

    const double xm = cfg.displacement(t_mid);
    for (std::size_t j = 0; j < n; ++j) {
      double v = prop.lattice(j, depth, xm);
      if (!gauge) v += tilt * state.position(j);
      psi[j] *= std::polar(absorb[j], -v * dtau);
    }

    if (gauge) fill_kinetic(tilt * (double(step) + 0.75) * dtau - shift);
    prop.plan.transform(psi, Direction::forward);
    for (std::size_t j = 0; j < n; ++j) psi[j] *= kinetic_half[j];
    prop.plan.transform(psi, Direction::inverse);

    if (gauge) {
      const double s_now = tilt * double(step + 1) * dtau - shift;
      if (s_now > std::numbers::pi) {
        // phi -> e^{-2 pi i xi} phi keeps the kinetic shift inside the zone.
        for (std::size_t j = 0; j < n; ++j)
          psi[j] *= std::polar(1.0, -2.0 * std::numbers::pi * state.position(j));
        shift += 2.0 * std::numbers::pi;
      }
    }
    state.time = t0 + double(step + 1) * dt;
    if (observer) {
      if (gauge) {
        GridState lab = state;
        const double s_total = tilt * double(step + 1) * dtau - shift;
        for (std::size_t j = 0; j < n; ++j) lab.psi[j] *= std::polar(1.0, -s_total * lab.position(j));
        observer(lab);
      } else {
        observer(state);
      }
    }
  }
  if (gauge) {
    const double s_total = tilt * double(steps) * dtau - shift;
    for (std::size_t j = 0; j < n; ++j) psi[j] *= std::polar(1.0, -s_total * state.position(j));
  }
  report.absorbed = std::max(0.0, start_norm - state.norm());
  report.boundary_flux_warning = report.absorbed > 1e-6;
  return report;
}

inline GridState split_step_evolve(GridState state, const LatticeConfig& lattice, const IntegratorConfig& cfg,
                                   double duration) {
  evolve(state, lattice, cfg, duration);
  return state;
}

// <H> of the static tilted lattice (mirror at rest), in E_R.
inline double static_energy(const GridState& state, const LatticeConfig& lattice) {
  const auto scales = lattice_scales(lattice);
  std::vector<complex> k(state.psi);
  FftPlan plan(k.size());
  plan.transform(k, Direction::forward);
  double kin = 0.0, pot = 0.0, norm = 0.0;
  const double inv_pi2 = 1.0 / (std::numbers::pi * std::numbers::pi);
  for (std::size_t j = 0; j < k.size(); ++j) {
    const double kap = fft_wavenumber(j, k.size(), state.spacing);
    kin += std::norm(k[j]) * kap * kap * inv_pi2;
    const double xi = state.position(j);
    const double s = std::sin(std::numbers::pi * xi);
    const double p = std::norm(state.psi[j]);
    pot += p * (lattice.lattice_depth * s * s + scales.tilt * xi);
    norm += p;
  }
  return (kin + pot) / norm;
}

// State in the frame of the moving lattice at the state's time: undo the
// mirror displacement and the boost of the lattice velocity.
inline GridState comoving_state(const GridState& lab, const LatticeConfig& lattice, const IntegratorConfig& cfg) {
  const auto scales = lattice_scales(lattice);
  GridState s = lab;
  const double xm = cfg.displacement(lab.time);
  const double kappa = detail::lattice_momentum(cfg.velocity(lab.time), scales);
  for (std::size_t j = 0; j < s.size(); ++j) s.psi[j] *= std::polar(1.0, -kappa * s.position(j));
  if (xm != 0.0) {
    FftPlan plan(s.size());
    plan.transform(s.psi, Direction::forward);
    for (std::size_t j = 0; j < s.size(); ++j)
      s.psi[j] *= std::polar(1.0, fft_wavenumber(j, s.size(), s.spacing) * xm);
    plan.transform(s.psi, Direction::inverse);
  }
  return s;
}

// Inverse of comoving_state: places a lattice-frame state into the lab at
// `time`, with the mirror displacement and velocity of that instant.
inline GridState lab_state(const GridState& comoving, const LatticeConfig& lattice, const IntegratorConfig& cfg,
                           double time) {
  const auto scales = lattice_scales(lattice);
  GridState s = comoving;
  s.time = time;
  const double xm = cfg.displacement(time);
  if (xm != 0.0) {
    FftPlan plan(s.size());
    plan.transform(s.psi, Direction::forward);
    for (std::size_t j = 0; j < s.size(); ++j)
      s.psi[j] *= std::polar(1.0, -fft_wavenumber(j, s.size(), s.spacing) * xm);
    plan.transform(s.psi, Direction::inverse);
  }
  const double kappa = detail::lattice_momentum(cfg.velocity(time), scales);
  for (std::size_t j = 0; j < s.size(); ++j) s.psi[j] *= std::polar(1.0, kappa * s.position(j));
  return s;
}

// Loads a lattice-frame state into the lab at `time` for a drive that
// switches on suddenly: moved with the mirror but at rest in the lab.
inline GridState loaded_state(const GridState& comoving, const LatticeConfig& lattice, const IntegratorConfig& cfg,
                              double time) {
  IntegratorConfig still = cfg;
  still.drive_frequency = 0.0;
  still.amplitude_pp = 2.0 * cfg.displacement(time);
  still.phase_origin = std::numbers::pi / 2;
  return lab_state(comoving, lattice, still, time);
}

// Probability in each lattice cell [m - 1/2, m + 1/2).
struct CellPopulations {
  long first_site = 0;
  std::vector<double> populations;
  double at(long m) const {
    const long i = m - first_site;
    return (i < 0 || i >= long(populations.size())) ? 0.0 : populations[std::size_t(i)];
  }
};

inline CellPopulations cell_populations(const GridState& s) {
  CellPopulations c;
  c.first_site = std::lround(std::floor(s.position(0) + 0.5));
  const long last = std::lround(std::floor(s.position(s.size() - 1) + 0.5));
  c.populations.assign(std::size_t(last - c.first_site + 1), 0.0);
  for (std::size_t j = 0; j < s.size(); ++j) {
    const long m = std::lround(std::floor(s.position(j) + 0.5));
    c.populations[std::size_t(m - c.first_site)] += std::norm(s.psi[j]) * s.spacing;
  }
  return c;
}

// Projections onto the Wannier functions w(x - m) for every site on the grid.
inline std::vector<complex> wannier_projections(const GridState& s, const WannierEnvelope& env, long& first_site) {
  const std::size_t pps = s.points_per_site();
  if (std::size_t(env.points_per_site) != pps)
    throw ValidationError("wannier_projections: envelope and grid differ in points per site");
  const long origin = std::lround(s.origin);
  if (std::abs(s.origin - double(origin)) > 1e-12)
    throw ValidationError("wannier_projections: grid origin must be a site");
  const long sites = long(s.size() / pps);
  first_site = origin;
  const long hw = long(env.half_width) * long(pps);
  std::vector<complex> out(std::size_t(sites), complex{});
  for (long m = 0; m < sites; ++m) {
    const long centre = m * long(pps);
    complex acc{};
    for (long j = -hw; j <= hw; ++j) {
      const long idx = centre + j;
      if (idx < 0 || idx >= long(s.size())) continue;
      acc += env.values[std::size_t(j + hw)] * s.psi[std::size_t(idx)];
    }
    out[std::size_t(m)] = acc * s.spacing;
  }
  return out;
}

// Populations of the basis WS states |n'> for every centre on the grid.
struct WsPopulations {
  long first_site = 0;
  std::vector<double> populations;
  double at(long m) const {
    const long i = m - first_site;
    return (i < 0 || i >= long(populations.size())) ? 0.0 : populations[std::size_t(i)];
  }
  double total() const {
    double t = 0.0;
    for (double p : populations) t += p;
    return t;
  }
};

inline WsPopulations ws_populations(const GridState& s, const SiteBasis& basis) {
  long first = 0;
  const auto o = wannier_projections(s, basis.envelope, first);
  const int r = basis.ws.reach();
  WsPopulations w;
  w.first_site = first;
  w.populations.assign(o.size(), 0.0);
  for (long n = 0; n < long(o.size()); ++n) {
    complex acc{};
    for (int k = -r; k <= r; ++k) {
      const long m = n + k;
      if (m < 0 || m >= long(o.size())) continue;
      acc += basis.ws.coefficients[std::size_t(k + r)] * o[std::size_t(m)];
    }
    w.populations[std::size_t(n)] = std::norm(acc);
  }
  return w;
}

// Grid rendering of WS amplitudes.
inline GridState render_row(const AmplitudeRow& row, const SiteBasis& basis, const GridSpec& grid) {
  if (std::size_t(basis.envelope.points_per_site) != grid.points_per_site)
    throw ValidationError("render_row: envelope and grid differ in points per site");
  const auto b = ws_to_site_amplitudes(row.amplitudes, basis.ws);
  GridState s;
  s.spacing = 1.0 / double(grid.points_per_site);
  s.origin = double(grid.origin);
  s.psi = render_sites(b, row.first_site - basis.ws.reach(), basis.envelope, double(grid.origin),
                       grid.sites * grid.points_per_site);
  return s;
}

struct PreparedState {
  GridState state;
  double overlap = 1.0;        // |<rendered WS|state>|^2
  double center_of_mass = 0.0; // sites
  double participation = 0.0;  // inverse participation ratio of cell populations, sites
};

// hbar / E_R; enough to remove the rendering's higher-band admixture at 8 E_R.
inline constexpr double default_relax_time = 2.0;

inline double center_of_mass(const GridState& s) {
  double m = 0.0, w = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double p = std::norm(s.psi[j]);
    m += p * s.position(j);
    w += p;
  }
  return m / w;
}

// Renders the basis WS state centred at `center`, then optionally relaxes it
// by imaginary-time evolution under the static Hamiltonian for relax_time
// (hbar / E_R).  Short relaxation damps higher-band admixture faster than
// it shifts weight down the ladder; a drift > 0.1 site is an error.
inline PreparedState prepare_ws_numeric(const LatticeConfig& lattice, const SiteBasis& basis, int center,
                                        const GridSpec& grid, double relax_time = default_relax_time) {
  AmplitudeRow row;
  row.center = center;
  row.first_site = center;
  row.amplitudes = {complex(1.0)};
  PreparedState out;
  out.state = render_row(row, basis, grid);
  out.state.normalize();
  const GridState rendered = out.state;

  if (relax_time > 0.0) {
    const auto scales = lattice_scales(lattice);
    const double dtau = 0.005;
    const std::size_t steps = std::size_t(std::ceil(relax_time / dtau));
    detail::Propagator prop(out.state, {0.0, 0.0});
    const std::size_t n = out.state.size();
    const double inv_pi2 = 1.0 / (std::numbers::pi * std::numbers::pi);
    std::vector<double> kin(n), pot(n);
    for (std::size_t j = 0; j < n; ++j) {
      kin[j] = std::exp(-prop.kappa[j] * prop.kappa[j] * inv_pi2 * 0.5 * dtau);
      const double xi = out.state.position(j);
      pot[j] = std::exp(-(prop.lattice(j, lattice.lattice_depth, 0.0) + scales.tilt * (xi - center)) * dtau);
    }
    auto& psi = out.state.psi;
    for (std::size_t st = 0; st < steps; ++st) {
      prop.plan.transform(psi, Direction::forward);
      for (std::size_t j = 0; j < n; ++j) psi[j] *= kin[j];
      prop.plan.transform(psi, Direction::inverse);
      for (std::size_t j = 0; j < n; ++j) psi[j] *= pot[j];
      prop.plan.transform(psi, Direction::forward);
      for (std::size_t j = 0; j < n; ++j) psi[j] *= kin[j];
      prop.plan.transform(psi, Direction::inverse);
      out.state.normalize();
    }
  }

  complex ov{};
  for (std::size_t j = 0; j < out.state.size(); ++j) ov += std::conj(rendered.psi[j]) * out.state.psi[j];
  out.overlap = std::norm(ov * out.state.spacing);
  out.center_of_mass = center_of_mass(out.state);
  const double drift = std::abs(out.center_of_mass - center_of_mass(rendered));
  if (drift > 0.1)
    throw NumericError("prepare_ws_numeric: relaxation drifted " + std::to_string(drift) +
                       " sites down the ladder");
  const auto cells = cell_populations(out.state);
  double ipr = 0.0;
  for (double p : cells.populations) ipr += p * p;
  out.participation = 1.0 / ipr;
  return out;
}

struct PopulationComparison {
  double l1 = 0.0;         // sum over lattice cells of |p_oracle - p_analytic|
  double fidelity = 0.0;   // |<analytic rendering|oracle>|^2
  double ws_l1 = 0.0;      // same distance for populations of the WS states |n'>
  double first_band = 0.0; // WS population captured in the window
};

// Compares an oracle state (already in the lattice frame, see comoving_state)
// with the closed-form row rendered in the same basis.  Both are binned into
// lattice cells; the analytic side is the coherent rendering, so neighbouring
// WS states interfere inside a cell exactly as they do in the oracle.
inline PopulationComparison compare_populations(const GridState& oracle, const AmplitudeRow& row,
                                                const SiteBasis& basis) {
  const auto cells = cell_populations(oracle);
  double outside = 0.0;
  const long lo = row.first_site, hi = row.last_site();
  for (std::size_t i = 0; i < cells.populations.size(); ++i) {
    const long m = cells.first_site + long(i);
    if (m < lo || m > hi) outside += cells.populations[i];
  }
  if (outside > 1e-6)
    throw NumericError("compare_populations: " + std::to_string(outside) +
                       " of the oracle population lies outside the analytic window");

  PopulationComparison out;
  const auto ws = ws_populations(oracle, basis);
  const long first = std::min<long>(lo, ws.first_site);
  const long last = std::max<long>(hi, ws.first_site + long(ws.populations.size()) - 1);
  double captured = 0.0;
  for (long m = first; m <= last; ++m) {
    const double pa = std::norm(row.at(int(m)));
    const double po = ws.at(m);
    if (m >= lo && m <= hi) captured += po;
    out.ws_l1 += std::abs(po - pa);
  }
  out.first_band = captured;

  GridSpec grid;
  grid.points_per_site = oracle.points_per_site();
  grid.sites = oracle.size() / grid.points_per_site;
  grid.origin = std::lround(oracle.origin);
  GridState analytic = render_row(row, basis, grid);
  complex ov{};
  double na = 0.0;
  for (std::size_t j = 0; j < oracle.size(); ++j) {
    ov += std::conj(analytic.psi[j]) * oracle.psi[j];
    na += std::norm(analytic.psi[j]);
  }
  out.fidelity = std::norm(ov) / (na * oracle.norm() / oracle.spacing);

  const double an = analytic.norm();
  for (auto& v : analytic.psi) v /= std::sqrt(an);
  const auto acells = cell_populations(analytic);
  for (std::size_t i = 0; i < cells.populations.size(); ++i) out.l1 += std::abs(cells.populations[i] - acells.populations[i]);
  return out;
}

struct OmegaCalibration {
  double tunneling_rate = 0.0;   // Omega, Hz
  double relative_residual = 0.0;
  std::vector<double> times;     // s
  std::vector<double> variances; // WS-population variance growth, sites^2
};

struct CalibrationOptions {
  GridSpec grid{};
  double duration_bloch_periods = 6.0;
  int samples = 12;
  double max_relative_residual = 0.1;
  Boundary boundary = Boundary::absorbing;
};

// Fits the oracle's WS-population variance growth to z(t)^2 / 2.
inline OmegaCalibration calibrate_omega(const LatticeConfig& lattice, const SiteBasis& basis, double amplitude_pp,
                                        double drive_frequency, const CalibrationOptions& opt = {}) {
  const auto scales = lattice_scales(lattice);
  if (!(scales.bloch_frequency > 0.0)) throw ValidationError("calibrate_omega: needs a tilted lattice");
  const double detuning = drive_frequency - scales.bloch_frequency;
  IntegratorConfig cfg;
  cfg.boundary = opt.boundary;
  cfg.amplitude_pp = amplitude_pp;
  cfg.drive_frequency = drive_frequency;

  const long cycles_total = std::lround(opt.duration_bloch_periods * drive_frequency / scales.bloch_frequency);
  const long per_sample = std::max<long>(1, cycles_total / opt.samples);
  auto prep = prepare_ws_numeric(lattice, basis, 0, opt.grid);
  GridState state = prep.state;

  auto variance = [&](const GridState& lab) {
    const auto w = ws_populations(comoving_state(lab, lattice, cfg), basis);
    double tot = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < w.populations.size(); ++i) {
      const double x = double(w.first_site + long(i));
      tot += w.populations[i];
      m1 += x * w.populations[i];
      m2 += x * x * w.populations[i];
    }
    m1 /= tot;
    return m2 / tot - m1 * m1;
  };

  OmegaCalibration cal;
  const double v0 = variance(state);
  for (int s = 1; s <= opt.samples; ++s) {
    evolve(state, lattice, cfg, double(per_sample) / drive_frequency);
    state.time = double(s * per_sample) / drive_frequency;
    cal.times.push_back(state.time);
    cal.variances.push_back(variance(state) - v0);
  }

  // variance = Omega^2 * g(t), g = 2 (sin(pi dnu t) / (pi dnu))^2.
  double num = 0.0, den = 0.0, vmax = 0.0;
  std::vector<double> g(cal.times.size());
  for (std::size_t i = 0; i < cal.times.size(); ++i) {
    const double z1 = drive_argument(1.0, detuning, cal.times[i]);
    g[i] = 0.5 * z1 * z1;
    num += g[i] * cal.variances[i];
    den += g[i] * g[i];
    vmax = std::max(vmax, std::abs(cal.variances[i]));
  }
  const double omega2 = std::max(0.0, num / den);
  cal.tunneling_rate = std::sqrt(omega2);
  double ss = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) ss += std::pow(cal.variances[i] - omega2 * g[i], 2);
  const double rms = std::sqrt(ss / double(g.size()));
  cal.relative_residual = vmax > 1e-6 ? rms / vmax : 0.0;
  if (cal.relative_residual > opt.max_relative_residual)
    throw NumericError("calibrate_omega: fit residual " + std::to_string(cal.relative_residual) +
                       " above threshold; calibration rejected");
  return cal;
}

// ---------------------------------------------------------------------------
// Checkpoints: text header terminated by "end\n", then interleaved
// (re, im) float64 values in little-endian byte order.
// ---------------------------------------------------------------------------

inline constexpr const char* checkpoint_magic = "WSDRIVE-CHECKPOINT 1";

inline void write_checkpoint(std::ostream& os, const GridState& s) {
  std::ostringstream h;
  h.precision(17);
  h << checkpoint_magic << '\n'
    << "points " << s.size() << '\n'
    << "spacing_sites " << s.spacing << '\n'
    << "origin_sites " << s.origin << '\n'
    << "time_s " << s.time << '\n'
    << "absorber_width_sites " << s.absorber.width << '\n'
    << "absorber_strength " << s.absorber.strength << '\n'
    << "encoding complex128-le\n"
    << "end\n";
  os << h.str();
  for (const auto& v : s.psi) {
    for (double part : {v.real(), v.imag()}) {
      const auto bits = std::bit_cast<std::uint64_t>(part);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = char((bits >> (8 * b)) & 0xff);
      os.write(bytes, 8);
    }
  }
  if (!os) throw NumericError("write_checkpoint: stream failure");
}

inline GridState read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != checkpoint_magic)
    throw ValidationError("read_checkpoint: not a checkpoint file");
  GridState s;
  std::size_t points = 0;
  while (std::getline(is, line) && line != "end") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "points") ls >> points;
    else if (key == "spacing_sites") ls >> s.spacing;
    else if (key == "origin_sites") ls >> s.origin;
    else if (key == "time_s") ls >> s.time;
    else if (key == "absorber_width_sites") ls >> s.absorber.width;
    else if (key == "absorber_strength") ls >> s.absorber.strength;
  }
  if (line != "end") throw ValidationError("read_checkpoint: truncated header");
  s.psi.resize(points);
  for (auto& v : s.psi) {
    double parts[2];
    for (double& part : parts) {
      unsigned char bytes[8];
      if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw ValidationError("read_checkpoint: truncated data");
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[b]) << (8 * b);
      part = std::bit_cast<double>(bits);
    }
    v = complex(parts[0], parts[1]);
  }
  return s;
}

}  // namespace wsdrive
