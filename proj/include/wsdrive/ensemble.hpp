#pragma once

// In-situ observables of the thermal ensemble: each atom starts in one
// Wannier-Stark state, initial sites are gaussian-distributed and the sites
// add incoherently.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "wsdrive/analytic.hpp"
#include "wsdrive/error.hpp"
#include "wsdrive/lattice.hpp"
#include "wsdrive/units.hpp"

namespace wsdrive {

enum class Provenance { insitu, tof };

inline std::string to_string(Provenance p) { return p == Provenance::insitu ? "in-situ" : "tof"; }

// Probability density on a uniform grid; normalised so sum(density) dx = 1.
struct DensityProfile {
  std::vector<double> positions;  // m
  std::vector<double> density;    // 1/m
  double time = 0.0;              // s
  Provenance provenance = Provenance::insitu;

  double spacing() const { return positions.size() > 1 ? positions[1] - positions[0] : 0.0; }

  double integral() const {
    double s = 0.0;
    for (double v : density) s += v;
    return s * spacing();
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < density.size(); ++i) s += positions[i] * density[i];
    return s * spacing() / integral();
  }

  double rms_width() const {
    const double mu = mean();
    double s = 0.0;
    for (std::size_t i = 0; i < density.size(); ++i)
      s += (positions[i] - mu) * (positions[i] - mu) * density[i];
    return std::sqrt(s * spacing() / integral());
  }
};

// Discrete gaussian over sites -reach..reach, normalised to unit sum.
inline std::vector<double> gaussian_site_weights(double sigma_sites, int reach) {
  std::vector<double> w(2 * reach + 1);
  double sum = 0.0;
  for (int n = -reach; n <= reach; ++n) {
    const double v = sigma_sites > 0.0 ? std::exp(-0.5 * n * n / (sigma_sites * sigma_sites)) : (n == 0 ? 1.0 : 0.0);
    w[n + reach] = v;
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

// Site populations of the ensemble: gaussian initial-site weights convolved
// with the Bessel-squared kernel.  Returned over sites -window..window.
inline std::vector<double> ensemble_site_populations(double z, double sigma_sites, int sample_count,
                                                     int window) {
  int g_reach = static_cast<int>(std::ceil(8.5 * sigma_sites)) + 1;
  if (sample_count > 0) g_reach = std::min(g_reach, (sample_count - 1) / 2);
  const auto g = gaussian_site_weights(sigma_sites, g_reach);
  const int k_reach = bessel_truncation_order(z);
  const auto kernel = bessel_row(k_reach, z);

  const int full = g_reach + k_reach;
  std::vector<double> p(2 * full + 1, 0.0);
  for (int n = -g_reach; n <= g_reach; ++n) {
    const double gn = g[n + g_reach];
    for (int k = -k_reach; k <= k_reach; ++k) {
      const double j = kernel.at(k);
      p[n + k + full] += gn * j * j;
    }
  }
  double outside = 0.0;
  for (int s = -full; s <= full; ++s)
    if (std::abs(s) > window) outside += p[s + full];
  if (outside > 1e-12)
    throw ValidationError("ensemble: site window " + std::to_string(window) + " leaves population " +
                          std::to_string(outside) + " outside; need half-width >= " + std::to_string(full));
  std::vector<double> out(2 * window + 1, 0.0);
  for (int s = -std::min(window, full); s <= std::min(window, full); ++s) out[s + window] = p[s + full];
  return out;
}

// Window large enough to hold the ensemble at argument z.
inline int ensemble_window(double z, double sigma_sites) {
  return static_cast<int>(std::ceil(8.5 * sigma_sites)) + 1 + bessel_truncation_order(z);
}

// rho(x, t) = sum_n' P(n') |phi_n'(x)|^2 with phi_n' the rendered WS state.
// Overlap cross terms between different WS states are dropped.
inline DensityProfile insitu_density(double t, const DriveConfig& drive, const LatticeConfig& lattice,
                                     const EnsembleConfig& ensemble, const SiteBasis& basis) {
  const double d = lattice.period();
  const double sigma_sites = ensemble.initial_rms_width / d;
  const double z = drive_argument(drive, t);
  const int window = ensemble.site_window > 0 ? ensemble.site_window : ensemble_window(z, sigma_sites);
  const auto pop = ensemble_site_populations(z, sigma_sites, ensemble.sample_count, window);

  // |phi_0(x)|^2 on the sub-site grid.
  const int pps = basis.envelope.points_per_site;
  const int reach = basis.ws.reach() + basis.envelope.half_width;
  const std::size_t kernel_points = std::size_t(2 * reach * pps + 1);
  std::vector<complex> ws_amp(basis.ws.coefficients.begin(), basis.ws.coefficients.end());
  const auto phi = render_sites(ws_amp, -basis.ws.reach(), basis.envelope, -reach, kernel_points);
  std::vector<double> phi2(kernel_points);
  double norm = 0.0;
  for (std::size_t j = 0; j < kernel_points; ++j) {
    phi2[j] = std::norm(phi[j]);
    norm += phi2[j];
  }
  norm /= pps;
  for (double& v : phi2) v /= norm;

  const int extent = window + reach;
  const std::size_t points = std::size_t(2 * extent * pps + 1);
  DensityProfile prof;
  prof.time = t;
  prof.provenance = Provenance::insitu;
  prof.positions.resize(points);
  prof.density.assign(points, 0.0);
  for (std::size_t j = 0; j < points; ++j) prof.positions[j] = (-double(extent) + double(j) / pps) * d;
  for (int s = -window; s <= window; ++s) {
    const double ps = pop[s + window];
    if (ps == 0.0) continue;
    const std::size_t base = std::size_t((s + window) * pps);
    for (std::size_t j = 0; j < kernel_points; ++j) prof.density[base + j] += ps * phi2[j];
  }
  const double total = prof.integral();
  if (!(total > 0.0)) throw NumericError("insitu_density: empty profile");
  for (double& v : prof.density) v /= total;
  return prof;
}

// Closed-form RMS width at each time, with optional damping of the breathing.
inline WidthSeries width_timeseries(std::span<const double> times, const DriveConfig& drive,
                                    const LatticeConfig& lattice, const EnsembleConfig& ensemble,
                                    const DampingModel& damping = {}) {
  if (!std::is_sorted(times.begin(), times.end()))
    throw ValidationError("width_timeseries: times must be sorted");
  const double d = lattice.period();
  const double sigma_sites = ensemble.initial_rms_width / d;
  WidthSeries s;
  s.sigma0 = ensemble.initial_rms_width;
  s.times.assign(times.begin(), times.end());
  s.widths.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    s.widths[i] = d * rms_width_sites(drive_argument(drive, times[i]), sigma_sites);
  return apply_damping(std::move(s), damping);
}

struct DampingFit {
  double period = 0.0;        // s
  double damping_time = std::numeric_limits<double>::infinity();  // s
  double amplitude = 0.0;     // A of the breathing model, units of sigma0 * Hz
  double rms_residual = 0.0;  // relative to sigma0
  bool damping_resolved = false;
};

namespace detail {

// width(t)/sigma0 = sqrt(1 + (a e^{-g t} sin(pi f t) / (pi f))^2 / 2)
inline double breathing_model(double a, double f, double g, double t) {
  const double b = a * std::exp(-g * t) * sin_pi(f * t) / (std::numbers::pi * f);
  return std::sqrt(1.0 + 0.5 * b * b);
}

struct BreathingResiduals {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const std::vector<double>* t;
  const std::vector<double>* y;

  int inputs() const { return 3; }
  int values() const { return static_cast<int>(t->size()); }
  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    for (std::size_t i = 0; i < t->size(); ++i) r(i) = breathing_model(p(0), p(1), p(2), (*t)[i]) - (*y)[i];
    return 0;
  }
};

// Frequency of the strongest oscillation of y(t) (non-uniform sampling allowed).
inline double dominant_frequency(const std::vector<double>& t, const std::vector<double>& y, double f_lo,
                                 double f_hi, double df) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= y.size();
  auto power = [&](double f) {
    double c = 0.0, s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double ph = 2.0 * std::numbers::pi * f * t[i];
      c += (y[i] - mean) * std::cos(ph);
      s += (y[i] - mean) * std::sin(ph);
    }
    return c * c + s * s;
  };
  double best = f_lo, best_p = -1.0;
  for (double f = f_lo; f <= f_hi; f += df) {
    const double p = power(f);
    if (p > best_p) best_p = p, best = f;
  }
  // Golden-section refinement inside the winning bin.
  double a = std::max(f_lo, best - df), b = best + df;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double c = b - gr * (b - a), d = a + gr * (b - a);
    if (power(c) > power(d)) b = d; else a = c;
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Least-squares fit of sigma^2 = sigma0^2 + (A e^{-t/tau} sin(pi f t)/(pi f))^2 / 2
// with free (A, f, tau); sigma0 is taken from the series.
inline DampingFit fit_damping(const WidthSeries& series) {
  const std::size_t n = series.times.size();
  if (n < 8) throw ValidationError("fit_damping: need at least 8 samples");
  if (!(series.sigma0 > 0.0)) throw ValidationError("fit_damping: series needs sigma0");
  const double span = series.times.back() - series.times.front();
  if (!(span > 0.0)) throw ValidationError("fit_damping: zero time span");

  std::vector<double> t(series.times), y(n), y2(n);
  double ymax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = series.widths[i] / series.sigma0;
    y2[i] = y[i] * y[i] - 1.0;
    ymax = std::max(ymax, y2[i]);
  }
  if (!(ymax > 1e-6)) throw NumericError("fit_damping: series shows no breathing");

  const double f_hi = 0.5 * double(n - 1) / span;
  const double f0 = detail::dominant_frequency(t, y2, 1.0 / span, f_hi, 0.125 / span);
  const double a0 = std::sqrt(2.0 * ymax) * std::numbers::pi * f0;

  detail::BreathingResiduals functor{&t, &y};
  Eigen::NumericalDiff<detail::BreathingResiduals> numeric(functor);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::BreathingResiduals>> lm(numeric);
  lm.parameters.maxfev = 4000;
  Eigen::VectorXd p(3);
  p << a0, f0, 0.0;
  const auto status = lm.minimize(p);

  Eigen::VectorXd r(n);
  functor(p, r);
  DampingFit fit;
  fit.rms_residual = std::sqrt(r.squaredNorm() / double(n));
  if (status <= 0 || !std::isfinite(fit.rms_residual) || !(std::abs(p(1)) > 0.0))
    throw NumericError("fit_damping: did not converge, best rms residual " + std::to_string(fit.rms_residual));
  fit.amplitude = std::abs(p(0));
  fit.period = 1.0 / std::abs(p(1));
  fit.damping_time = p(2) > 0.0 ? 1.0 / p(2) : std::numeric_limits<double>::infinity();
  fit.damping_resolved = fit.damping_time <= 10.0 * span;
  return fit;
}

}  // namespace wsdrive
