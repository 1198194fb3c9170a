#pragma once

// Closed-form driven evolution in the Wannier-Stark basis.  A state started
// in |n> evolves into
//
//   |n(t)> = sum_n' e^{-i n' 2 pi nu_B t} e^{i pi (n - n') dnu t} J_{n-n'}(z(t)) |n'>,
//   z(t)   = sin(pi dnu t) 2 Omega / (pi dnu),
//
// which breathes with period 1/|dnu| and spreads linearly at resonance.
// That is the mirror phase phi0 = 0; other phases multiply each term by
// e^{i (n - n') phi0}.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "wsdrive/error.hpp"
#include "wsdrive/numerics.hpp"
#include "wsdrive/units.hpp"

namespace wsdrive {

// Below this detuning (Hz) the resonant series replaces the sinc form.
inline constexpr double resonance_threshold = 1e-6;

namespace detail {
// sin(pi x) with argument reduction, exact zeros at integer x.
inline double sin_pi(double x) {
  const double r = std::remainder(x, 2.0);
  return std::sin(std::numbers::pi * r);
}
// Fractional part of x in [0, 1).
inline double frac(double x) { return x - std::floor(x); }
}  // namespace detail

inline double drive_argument(double tunneling_rate, double detuning, double t) {
  if (std::abs(detuning) < resonance_threshold) {
    const double x = std::numbers::pi * detuning * t;
    return 2.0 * tunneling_rate * t * (1.0 - x * x / 6.0);
  }
  return detail::sin_pi(detuning * t) * 2.0 * tunneling_rate / (std::numbers::pi * detuning);
}

inline double drive_argument(const DriveConfig& drive, double t) {
  return drive_argument(drive.tunneling_rate, drive.detuning, t);
}

struct AmplitudeRow {
  int center = 0;        // initial site n
  double time = 0.0;     // s
  int first_site = 0;    // n' of amplitudes[0]
  std::vector<complex> amplitudes;
  double tunneling_rate = 0.0;
  double detuning = 0.0;
  double bloch_frequency = 0.0;

  int last_site() const { return first_site + int(amplitudes.size()) - 1; }
  complex at(int site) const {
    const int i = site - first_site;
    return (i < 0 || i >= int(amplitudes.size())) ? complex{} : amplitudes[i];
  }
};

// half_window = 0 sizes the window from the Bessel truncation bound.
inline AmplitudeRow amplitude_row(int n, double t, const DriveConfig& drive, double bloch_frequency,
                                  int half_window = 0) {
  if (!(t >= 0.0)) throw ValidationError("amplitude_row: time must be non-negative");
  const double z = drive_argument(drive, t);
  const int needed = bessel_truncation_order(z);
  if (half_window == 0) half_window = needed;
  if (half_window < needed)
    throw ValidationError("amplitude_row: site window half-width " + std::to_string(half_window) +
                          " too small, need " + std::to_string(needed));

  const auto bessel = bessel_row(half_window, z);
  AmplitudeRow row;
  row.center = n;
  row.time = t;
  row.first_site = n - half_window;
  row.tunneling_rate = drive.tunneling_rate;
  row.detuning = drive.detuning;
  row.bloch_frequency = bloch_frequency;
  row.amplitudes.resize(2 * half_window + 1);

  const double bloch_cycles = detail::frac(bloch_frequency * t);
  const double detuning_cycles = 0.5 * drive.detuning * t;
  // The mirror phase rotates the coupling: Omega -> Omega e^{-i phi0}.
  const double drive_cycles = drive.phase_origin / (2.0 * std::numbers::pi);
  for (int i = 0; i < int(row.amplitudes.size()); ++i) {
    const int site = row.first_site + i;
    const int k = n - site;
    const double cycles = detail::frac(-double(site) * bloch_cycles) + detail::frac(double(k) * detuning_cycles) +
                          detail::frac(double(k) * drive_cycles);
    row.amplitudes[i] = std::polar(bessel.at(k), 2.0 * std::numbers::pi * cycles);
  }
  return row;
}

inline std::vector<double> site_populations(const AmplitudeRow& row) {
  std::vector<double> p(row.amplitudes.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(row.amplitudes[i]);
  return p;
}

// Variances add: gaussian site distribution of width sigma0 convolved with
// the Bessel-squared kernel of variance z^2/2.
inline double rms_width_sites(double z, double sigma0_sites) {
  if (!(sigma0_sites >= 0.0)) throw ValidationError("rms_width_sites: sigma0 must be non-negative");
  return std::sqrt(sigma0_sites * sigma0_sites + 0.5 * z * z);
}

inline double revival_time(double detuning) {
  if (detuning == 0.0) throw NoRevivalError("revival_time: resonant drive grows without revival");
  return 1.0 / std::abs(detuning);
}

struct DampingModel {
  double damping_time = std::numeric_limits<double>::infinity();  // s
};

struct WidthSeries {
  std::vector<double> times;   // s
  std::vector<double> widths;  // m
  double sigma0 = 0.0;         // undriven width, m
  std::optional<double> fitted_period;
  std::optional<double> fitted_damping_time;
};

// Scales the breathing quadrature sqrt(sigma^2 - sigma0^2) by e^{-t/tau}.
inline WidthSeries apply_damping(WidthSeries series, const DampingModel& model) {
  if (!(model.damping_time > 0.0)) throw ValidationError("apply_damping: damping time must be positive");
  if (std::isinf(model.damping_time)) return series;
  const double s0 = series.sigma0;
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    const double breathing2 = std::max(0.0, series.widths[i] * series.widths[i] - s0 * s0);
    const double decay = std::exp(-2.0 * series.times[i] / model.damping_time);
    series.widths[i] = std::sqrt(s0 * s0 + breathing2 * decay);
  }
  return series;
}

}  // namespace wsdrive
