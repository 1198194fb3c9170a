#pragma once

// Momentum distribution and ballistic expansion of a coherent amplitude row.
//
// The rendered state is psi(x) = sum_m b_m w(x - m d) with b the WS
// amplitudes convolved with the WS site profile, so
//
//   psi~(p) = w~(p) sum_m b_m e^{-i p m d / hbar}.
//
// Momenta are in units of hbar k; the lattice axis points up, against gravity.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "wsdrive/analytic.hpp"
#include "wsdrive/ensemble.hpp"
#include "wsdrive/error.hpp"
#include "wsdrive/lattice.hpp"
#include "wsdrive/numerics.hpp"
#include "wsdrive/units.hpp"

namespace wsdrive {

struct MomentumDensity {
  std::vector<double> momentum;  // hbar k, ascending
  std::vector<double> density;   // per unit hbar k
  double hold_time = 0.0;        // s

  double spacing() const { return momentum[1] - momentum[0]; }
  double integral() const {
    double s = 0.0;
    for (double v : density) s += v;
    return s * spacing();
  }
};

// Real/momentum grid shared by rendering and transforms: `sites` lattice
// sites (power of two) at `points_per_site` samples each.  Momentum spacing
// is 2 / sites (hbar k), range +-points_per_site.
class MomentumFrame {
public:
  MomentumFrame(const SiteBasis& basis, std::size_t sites)
      : sites_(sites), pps_(std::size_t(basis.envelope.points_per_site)),
        points_(sites * pps_), site_plan_(sites), full_plan_(points_) {
    if (!is_power_of_two(sites) || !is_power_of_two(pps_))
      throw ValidationError("MomentumFrame: sites and points per site must be powers of two");
    const auto& env = basis.envelope;
    if (std::size_t(2 * env.half_width) >= sites)
      throw ValidationError("MomentumFrame: grid narrower than the Wannier envelope");
    envelope_.assign(points_, complex{});
    const long hw = long(env.half_width) * long(pps_);
    for (long i = -hw; i <= hw; ++i) envelope_[std::size_t((i + long(points_)) % long(points_))] = env.values[i + hw];
    full_plan_.transform(envelope_, Direction::forward);
  }

  std::size_t sites() const { return sites_; }
  std::size_t points_per_site() const { return pps_; }
  std::size_t points() const { return points_; }

  // Momentum of FFT bin j.
  double momentum(std::size_t j) const {
    const long s = j < points_ / 2 ? long(j) : long(j) - long(points_);
    return 2.0 * double(s) / double(sites_);
  }

  // psi~ in FFT order for site amplitudes b, b[0] sitting `offset` sites from
  // the frame origin.  Unnormalised.
  std::vector<complex> spectrum(std::span<const complex> site_amplitudes, long offset) const {
    std::vector<complex> comb(sites_, complex{});
    for (std::size_t m = 0; m < site_amplitudes.size(); ++m) {
      const long idx = ((offset + long(m)) % long(sites_) + long(sites_)) % long(sites_);
      comb[std::size_t(idx)] += site_amplitudes[m];
    }
    site_plan_.transform(comb, Direction::forward);
    std::vector<complex> out(points_);
    for (std::size_t j = 0; j < points_; ++j) {
      const long s = j < points_ / 2 ? long(j) : long(j) - long(points_);
      const std::size_t c = std::size_t(((s % long(sites_)) + long(sites_)) % long(sites_));
      out[j] = envelope_[j] * comb[c];
    }
    return out;
  }

  void inverse(std::vector<complex>& data) const { full_plan_.transform(data, Direction::inverse); }

private:
  std::size_t sites_, pps_, points_;
  FftPlan site_plan_, full_plan_;
  std::vector<complex> envelope_;  // w~ in FFT order
};

namespace detail {

// WS amplitudes after a static hold, convolved to Wannier-site amplitudes.
inline std::vector<complex> held_site_amplitudes(const AmplitudeRow& row, const SiteBasis& basis,
                                                 double hold_time) {
  std::vector<complex> a(row.amplitudes);
  const double cycles = frac(basis.bloch_hz * hold_time);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int site = row.first_site + int(i);
    a[i] *= std::polar(1.0, -2.0 * std::numbers::pi * frac(double(site) * cycles));
  }
  return ws_to_site_amplitudes(a, basis.ws);
}

inline std::size_t site_span(const AmplitudeRow& row, const SiteBasis& basis) {
  return row.amplitudes.size() + 2 * std::size_t(basis.ws.reach());
}

}  // namespace detail

// Smallest grid (sites) that resolves the comb of this row: twice its span.
inline std::size_t required_momentum_sites(const AmplitudeRow& row, const SiteBasis& basis) {
  return std::max<std::size_t>(next_power_of_two(2 * detail::site_span(row, basis)),
                               next_power_of_two(4 * std::size_t(basis.envelope.half_width)));
}

inline MomentumDensity momentum_density(const AmplitudeRow& row, const SiteBasis& basis, double hold_time,
                                        const MomentumFrame& frame) {
  const std::size_t need = 2 * detail::site_span(row, basis);
  if (frame.sites() < need)
    throw ValidationError("momentum_density: grid of " + std::to_string(frame.sites()) +
                          " sites cannot resolve the comb, need >= " + std::to_string(next_power_of_two(need)));
  const auto b = detail::held_site_amplitudes(row, basis, hold_time);
  const auto spec = frame.spectrum(b, long(row.first_site - basis.ws.reach() - row.center));
  const std::size_t n = frame.points();
  MomentumDensity md;
  md.hold_time = hold_time;
  md.momentum.resize(n);
  md.density.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = (k + n / 2) % n;  // ascending momentum
    md.momentum[k] = frame.momentum(j);
    md.density[k] = std::norm(spec[j]);
  }
  const double total = md.integral();
  for (double& v : md.density) v /= total;
  return md;
}

inline MomentumDensity momentum_density(const AmplitudeRow& row, const SiteBasis& basis, double hold_time) {
  return momentum_density(row, basis, hold_time, MomentumFrame(basis, required_momentum_sites(row, basis)));
}

// Peak momentum of the interference comb after holding for hold_time in the
// static tilted lattice: a sawtooth of period 1/nu_B wrapping at +-hbar k.
// Gravity pulls along -x, so the peak moves to negative momentum.
inline double bloch_peak_position(double hold_time, double bloch_frequency) {
  if (!(bloch_frequency > 0.0)) throw ValidationError("bloch_peak_position: needs nu_B > 0");
  const double s = 2.0 * bloch_frequency * hold_time;
  const double w = std::fmod(s + 1.0, 2.0) - 1.0;
  return -w;
}

// Momentum of the strongest comb tooth within the first Brillouin zone.
inline double interference_peak(const MomentumDensity& md) {
  double best = 0.0, best_p = 0.0;
  for (std::size_t i = 0; i < md.momentum.size(); ++i) {
    if (std::abs(md.momentum[i]) > 1.0 + 1e-12) continue;
    if (md.density[i] > best) best = md.density[i], best_p = md.momentum[i];
  }
  return best_p;
}

enum class TofMode { farfield, exact };

inline std::string to_string(TofMode m) { return m == TofMode::farfield ? "farfield" : "exact"; }

struct TofOptions {
  TofMode mode = TofMode::exact;
  bool free_fall = false;       // shift by -g t^2 / 2 along the lattice axis
  std::size_t grid_sites = 0;   // 0 = size automatically
};

struct TofProfile {
  DensityProfile profile;  // provenance tof
  double tof_time = 0.0;   // s
  double hold_time = 0.0;  // s
  TofMode mode = TofMode::exact;
  bool free_fall = false;
};

// Momentum (hbar k) beyond which |w~(p)|^2 stays below 1e-12 of its peak.
inline double envelope_momentum_cutoff(const SiteBasis& basis) {
  MomentumFrame frame(basis, next_power_of_two(4 * std::size_t(basis.envelope.half_width)));
  const std::vector<complex> single{complex(1.0)};
  const auto spec = frame.spectrum(single, 0);
  double peak = 0.0;
  for (const auto& v : spec) peak = std::max(peak, std::norm(v));
  double cut = 0.0;
  for (std::size_t j = 0; j < spec.size(); ++j)
    if (std::norm(spec[j]) > 1e-12 * peak) cut = std::max(cut, std::abs(frame.momentum(j)));
  return cut;
}

// Grid (sites) for exact propagation to tof_time without wrap-around.
inline std::size_t exact_tof_sites(const AmplitudeRow& row, const SiteBasis& basis, const LatticeConfig& lattice,
                                   double tof_time) {
  const auto scales = lattice_scales(lattice);
  const double spread = envelope_momentum_cutoff(basis) * scales.recoil_velocity * tof_time / scales.period;
  const std::size_t need = std::size_t(std::ceil(2.0 * spread * 1.25)) + 2 * detail::site_span(row, basis) +
                           4 * std::size_t(basis.envelope.half_width);
  return std::max(next_power_of_two(need), required_momentum_sites(row, basis));
}

inline TofProfile tof_profile(const AmplitudeRow& row, const SiteBasis& basis, const LatticeConfig& lattice,
                              double hold_time, double tof_time, const TofOptions& opt = {}) {
  if (!(tof_time >= 0.0)) throw ValidationError("tof_profile: tof_time must be non-negative");
  const auto scales = lattice_scales(lattice);
  const double d = scales.period;
  TofProfile out;
  out.tof_time = tof_time;
  out.hold_time = hold_time;
  out.mode = opt.mode;
  out.free_fall = opt.free_fall;
  out.profile.provenance = Provenance::tof;
  out.profile.time = tof_time;
  const double drop = opt.free_fall ? -0.5 * lattice.gravity * tof_time * tof_time : 0.0;

  if (opt.mode == TofMode::farfield) {
    if (!(tof_time > 0.0)) throw ValidationError("tof_profile: far-field mapping needs tof_time > 0");
    const std::size_t sites = opt.grid_sites ? opt.grid_sites : required_momentum_sites(row, basis);
    const auto md = momentum_density(row, basis, hold_time, MomentumFrame(basis, sites));
    const double scale = scales.recoil_velocity * tof_time;  // m per hbar k
    out.profile.positions.resize(md.momentum.size());
    out.profile.density.resize(md.momentum.size());
    for (std::size_t i = 0; i < md.momentum.size(); ++i) {
      out.profile.positions[i] = md.momentum[i] * scale + drop;
      out.profile.density[i] = md.density[i] / scale;
    }
    return out;
  }

  const std::size_t sites = opt.grid_sites ? opt.grid_sites : exact_tof_sites(row, basis, lattice, tof_time);
  MomentumFrame frame(basis, sites);
  if (frame.sites() < 2 * detail::site_span(row, basis))
    throw ValidationError("tof_profile: grid of " + std::to_string(sites) + " sites too small for the row");
  const auto b = detail::held_site_amplitudes(row, basis, hold_time);
  auto spec = frame.spectrum(b, long(row.first_site - basis.ws.reach() - row.center));
  const double phase_rate = tof_time / scales.time_unit;  // p^2 E_R t / hbar
  for (std::size_t j = 0; j < spec.size(); ++j) {
    const double p = frame.momentum(j);
    spec[j] *= std::polar(1.0, -p * p * phase_rate);
  }
  frame.inverse(spec);

  const std::size_t n = frame.points();
  const double pps = double(frame.points_per_site());
  std::vector<double> dens(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    dens[k] = std::norm(spec[(k + n / 2) % n]);
    total += dens[k];
  }
  const std::size_t edge = n / 16;
  double edge_mass = 0.0;
  for (std::size_t k = 0; k < edge; ++k) edge_mass += dens[k] + dens[n - 1 - k];
  if (edge_mass > 1e-6 * total)
    throw NumericError("tof_profile: wavepacket reaches the grid edge (aliasing); use more than " +
                       std::to_string(sites) + " sites");

  out.profile.positions.resize(n);
  out.profile.density.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double xi = double(row.center) + (double(k) - double(n / 2)) / pps;
    out.profile.positions[k] = xi * d + drop;
    out.profile.density[k] = dens[k];
  }
  const double norm = out.profile.integral();
  for (double& v : out.profile.density) v /= norm;
  return out;
}

// Far-field momentum coordinate (hbar k) of the strongest peak of a TOF
// profile within the first zone: p = (x - x0) / (v_rec t).  In the near
// field this still locates the interference peak, because the peak forms
// where the group-velocity spread of the comb is stationary.
inline double tof_peak_momentum(const TofProfile& tp, const LatticeConfig& lattice, int center) {
  if (!(tp.tof_time > 0.0)) throw ValidationError("tof_peak_momentum: needs tof_time > 0");
  const auto scales = lattice_scales(lattice);
  const double drop = tp.free_fall ? -0.5 * lattice.gravity * tp.tof_time * tp.tof_time : 0.0;
  const double x0 = double(center) * scales.period + drop;
  const double scale = scales.recoil_velocity * tp.tof_time;
  double best = -1.0, best_p = 0.0;
  for (std::size_t i = 0; i < tp.profile.positions.size(); ++i) {
    const double p = (tp.profile.positions[i] - x0) / scale;
    if (std::abs(p) > 1.0 + 1e-12) continue;
    if (tp.profile.density[i] > best) best = tp.profile.density[i], best_p = p;
  }
  return best_p;
}

// weight * a + (1 - weight) * b on a shared grid.
inline DensityProfile mix_profiles(const DensityProfile& a, const DensityProfile& b, double weight) {
  if (a.positions.size() != b.positions.size() || a.positions.front() != b.positions.front() ||
      a.spacing() != b.spacing())
    throw ValidationError("mix_profiles: profiles must share a grid");
  DensityProfile out = a;
  for (std::size_t i = 0; i < out.density.size(); ++i)
    out.density[i] = weight * a.density[i] + (1.0 - weight) * b.density[i];
  return out;
}

// Full width at half maximum of the highest peak (linear interpolation).
inline double peak_fwhm(const DensityProfile& prof) {
  const auto& y = prof.density;
  const std::size_t top = std::size_t(std::max_element(y.begin(), y.end()) - y.begin());
  const double half = 0.5 * y[top];
  std::size_t l = top, r = top;
  while (l > 0 && y[l] > half) --l;
  while (r + 1 < y.size() && y[r] > half) ++r;
  const double dx = prof.spacing();
  auto cross = [&](std::size_t inside, std::size_t outside) {
    const double f = (y[inside] - half) / (y[inside] - y[outside]);
    return prof.positions[inside] + f * (prof.positions[outside] - prof.positions[inside]);
  };
  if (y[l] > half || y[r] > half) return double(y.size()) * dx;
  return cross(r - 1, r) - cross(l + 1, l);
}

struct RevivalTofSet {
  std::array<double, 3> drive_times{};  // A: 0, B: 1/(2 dnu), C: 1/dnu
  std::vector<double> tof_times;
  std::array<std::vector<TofProfile>, 3> profiles;  // [stage][tof index]
};

// In-situ and expanded profiles with no driving, at maximum expansion and at
// the first revival.  All profiles share one grid.
inline RevivalTofSet tof_scenario_revival(const DriveConfig& drive, const SiteBasis& basis,
                                          const LatticeConfig& lattice, std::vector<double> tof_times,
                                          TofOptions opt = {}) {
  if (drive.detuning == 0.0) throw ValidationError("tof_scenario_revival: needs a non-zero detuning");
  RevivalTofSet set;
  set.tof_times = std::move(tof_times);
  const double revival = revival_time(drive.detuning);
  set.drive_times = {0.0, 0.5 * revival, revival};
  std::array<AmplitudeRow, 3> rows;
  for (int s = 0; s < 3; ++s) rows[s] = amplitude_row(0, set.drive_times[s], drive, basis.bloch_hz);
  const int reach = rows[1].amplitudes.size() / 2;
  for (int s = 0; s < 3; ++s)
    if (int(rows[s].amplitudes.size() / 2) < reach)
      rows[s] = amplitude_row(0, set.drive_times[s], drive, basis.bloch_hz, reach);
  const double longest = *std::max_element(set.tof_times.begin(), set.tof_times.end());
  if (!opt.grid_sites)
    opt.grid_sites = opt.mode == TofMode::exact ? exact_tof_sites(rows[1], basis, lattice, longest)
                                                : required_momentum_sites(rows[1], basis);
  for (int s = 0; s < 3; ++s)
    for (double tof : set.tof_times) set.profiles[s].push_back(tof_profile(rows[s], basis, lattice, 0.0, tof, opt));
  return set;
}

inline double l1_distance(const DensityProfile& a, const DensityProfile& b) {
  if (a.density.size() != b.density.size()) throw ValidationError("l1_distance: grid mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.density.size(); ++i) s += std::abs(a.density[i] - b.density[i]);
  return s * a.spacing();
}

}  // namespace wsdrive
