#pragma once

// Physical constants, experiment configuration and derived lattice scales.
//
// Evolution code works in lattice units: lengths in sites (d = lambda/2),
// energies in recoil energies E_R, times in hbar/E_R.  SI values appear only
// in the config types below and at output boundaries.

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wsdrive/error.hpp"

namespace wsdrive {

namespace constants {
// CODATA 2018 (h, k_B exact by SI definition).
inline constexpr double planck = 6.62607015e-34;            // J s
inline constexpr double hbar = planck / (2.0 * std::numbers::pi);
inline constexpr double boltzmann = 1.380649e-23;           // J/K
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double standard_gravity = 9.80665;         // m/s^2

inline constexpr double sr88_mass_u = 87.9056;
inline constexpr double sr88_mass = sr88_mass_u * atomic_mass_unit;

// Local gravity that reproduces the 574.14 Hz Bloch frequency of the
// reference experiment with the constants above.
inline constexpr double reference_gravity = 9.7973;
inline constexpr double reference_wavelength = 532e-9;
inline constexpr double max_drive_amplitude_pp = 10.0;
}  // namespace constants

struct LatticeConfig {
  double atom_mass = constants::sr88_mass;           // kg
  double lattice_wavelength = constants::reference_wavelength;  // m
  double lattice_depth = 8.0;                        // E_R
  double gravity = constants::reference_gravity;     // m/s^2, may be 0

  double period() const { return 0.5 * lattice_wavelength; }
  // Lattice wavenumber k = 2 pi / lambda; hbar k is the photon recoil momentum.
  double wavenumber() const { return 2.0 * std::numbers::pi / lattice_wavelength; }
};

struct DriveConfig {
  double amplitude_pp = 0.0;    // lattice sites, peak-to-peak
  double detuning = 0.0;        // Hz, nu_PZT - nu_B
  double tunneling_rate = 0.0;  // Omega, Hz
  std::optional<double> duration;      // s
  std::optional<long> cycle_count;
  double phase_origin = 0.0;    // rad
};

struct EnsembleConfig {
  double initial_rms_width = 31e-6;  // m
  int site_window = 0;               // half-width; 0 = size automatically
  int sample_count = 0;              // initial sites summed; 0 = all with weight
};

inline double bloch_frequency(const LatticeConfig& cfg) {
  return cfg.atom_mass * cfg.gravity * cfg.period() / constants::planck;
}

inline double recoil_energy(const LatticeConfig& cfg) {
  const double h = constants::planck;
  return h * h / (2.0 * cfg.atom_mass * cfg.lattice_wavelength * cfg.lattice_wavelength);
}

inline double recoil_temperature_nk(const LatticeConfig& cfg) {
  return recoil_energy(cfg) / constants::boltzmann * 1e9;
}

// Derived scales used to move between SI and lattice units.
struct LatticeScales {
  double period = 0.0;          // d, m
  double recoil_energy = 0.0;   // E_R, J
  double recoil_frequency = 0.0;  // E_R / h, Hz
  double bloch_frequency = 0.0;   // Hz
  double time_unit = 0.0;       // hbar / E_R, s
  double tilt = 0.0;            // h nu_B / E_R: energy step per site in E_R
  double recoil_velocity = 0.0; // hbar k / m, m/s
};

inline LatticeScales lattice_scales(const LatticeConfig& cfg) {
  LatticeScales s;
  s.period = cfg.period();
  s.recoil_energy = recoil_energy(cfg);
  s.recoil_frequency = s.recoil_energy / constants::planck;
  s.bloch_frequency = bloch_frequency(cfg);
  s.time_unit = constants::hbar / s.recoil_energy;
  s.tilt = s.bloch_frequency / s.recoil_frequency;
  s.recoil_velocity = constants::hbar * cfg.wavenumber() / cfg.atom_mass;
  return s;
}

struct ConfigIssue {
  std::string field;
  std::string message;
};

struct ValidatedConfig {
  LatticeConfig lattice;
  DriveConfig drive;  // duration and cycle_count both filled when derivable
  EnsembleConfig ensemble;
  double drive_frequency = 0.0;  // nu_PZT = nu_B + detuning
  double duration = 0.0;         // resolved drive duration, s
};

struct ConfigValidation {
  std::optional<ValidatedConfig> config;
  std::vector<ConfigIssue> errors;
  std::vector<ConfigIssue> warnings;

  bool ok() const { return config.has_value(); }

  std::string describe() const {
    std::ostringstream os;
    for (const auto& e : errors) os << e.field << ": " << e.message << '\n';
    return os.str();
  }

  // Returns the bundle or throws a ValidationError listing every problem.
  const ValidatedConfig& value() const {
    if (!config) throw ValidationError("invalid configuration:\n" + describe());
    return *config;
  }
};

inline long cycles_for(double duration, double drive_frequency) {
  return std::lround(duration * drive_frequency);
}

inline ConfigValidation validate_config(const LatticeConfig& lattice, const DriveConfig& drive,
                                        const EnsembleConfig& ensemble) {
  ConfigValidation out;
  auto error = [&](std::string field, std::string msg) {
    out.errors.push_back({std::move(field), std::move(msg)});
  };

  if (!(lattice.atom_mass > 0.0)) error("lattice.atom_mass", "must be positive");
  if (!(lattice.lattice_wavelength > 0.0)) error("lattice.lattice_wavelength", "must be positive");
  if (!(lattice.lattice_depth >= 0.0)) error("lattice.lattice_depth", "must be non-negative");
  if (!std::isfinite(lattice.gravity)) error("lattice.gravity", "must be finite");

  if (!(drive.amplitude_pp >= 0.0)) error("drive.amplitude_pp", "must be non-negative");
  if (drive.amplitude_pp > constants::max_drive_amplitude_pp)
    out.warnings.push_back({"drive.amplitude_pp", "exceeds the 10-site experimental maximum"});
  if (!(drive.tunneling_rate >= 0.0)) error("drive.tunneling_rate", "must be non-negative");
  if (!std::isfinite(drive.detuning)) error("drive.detuning", "must be finite");
  if (drive.duration && !(*drive.duration >= 0.0)) error("drive.duration", "must be non-negative");
  if (drive.cycle_count && *drive.cycle_count < 0) error("drive.cycle_count", "must be non-negative");

  if (!(ensemble.initial_rms_width > 0.0)) error("ensemble.initial_rms_width", "must be positive");
  if (ensemble.site_window < 0) error("ensemble.site_window", "must be non-negative");
  if (ensemble.sample_count < 0) error("ensemble.sample_count", "must be non-negative");

  ValidatedConfig v{lattice, drive, ensemble, 0.0, 0.0};
  if (out.errors.empty()) {
    v.drive_frequency = bloch_frequency(lattice) + drive.detuning;
    const bool has_duration = drive.duration.has_value();
    const bool has_cycles = drive.cycle_count.has_value();
    if (!has_duration && !has_cycles) {
      error("drive.duration", "one of drive.duration or drive.cycle_count is required");
    } else if (has_cycles) {
      if (*drive.cycle_count > 0 && !(v.drive_frequency > 0.0)) {
        error("drive.cycle_count", "needs a positive drive frequency nu_B + detuning");
      } else {
        const double from_cycles =
            *drive.cycle_count == 0 ? 0.0 : double(*drive.cycle_count) / v.drive_frequency;
        if (has_duration && std::abs(*drive.duration - from_cycles) > 1e-9 * std::max(1.0, from_cycles)) {
          error("drive.duration", "inconsistent with drive.cycle_count");
          error("drive.cycle_count", "inconsistent with drive.duration");
        }
        v.duration = from_cycles;
        v.drive.duration = from_cycles;
      }
    } else {
      v.duration = *drive.duration;
      if (v.drive_frequency > 0.0) {
        const double cycles = v.duration * v.drive_frequency;
        if (std::abs(cycles - std::round(cycles)) < 1e-9 * std::max(1.0, cycles))
          v.drive.cycle_count = std::lround(cycles);
      }
    }
  }

  if (out.errors.empty()) out.config = v;
  return out;
}

}  // namespace wsdrive
