// Unit conversions and config validation.
//
// Reference numbers: Sr-88 in a 532 nm lattice under gravity; h nu_B = m g d,
// E_R = h^2 / (2 m lambda^2).

#include <gtest/gtest.h>

#include <cmath>

#include "wsdrive/units.hpp"

using namespace wsdrive;

TEST(Units, BlochFrequencyFromMgd) {
  LatticeConfig cfg;
  const double expected = cfg.atom_mass * cfg.gravity * 266e-9 / constants::planck;
  EXPECT_NEAR(bloch_frequency(cfg), expected, 1e-9 * expected);
  EXPECT_NEAR(bloch_frequency(cfg), 574.14, 574.14 * 2e-4);
}

TEST(Units, StandardGravityStaysWithinTwoPermille) {
  LatticeConfig cfg;
  cfg.gravity = constants::standard_gravity;
  EXPECT_NEAR(bloch_frequency(cfg), 574.14, 574.14 * 2e-3);
}

TEST(Units, RecoilEnergy) {
  LatticeConfig cfg;
  const double er = constants::planck * constants::planck / (2.0 * cfg.atom_mass * 532e-9 * 532e-9);
  EXPECT_NEAR(recoil_energy(cfg), er, 1e-12 * er);
  EXPECT_NEAR(recoil_temperature_nk(cfg), 381.0, 381.0 * 0.02);
}

TEST(Units, ScalesAreConsistent) {
  LatticeConfig cfg;
  const auto s = lattice_scales(cfg);
  EXPECT_DOUBLE_EQ(s.period, 266e-9);
  EXPECT_NEAR(s.time_unit, constants::hbar / s.recoil_energy, 1e-20);
  EXPECT_NEAR(s.tilt, s.bloch_frequency / s.recoil_frequency, 1e-14);
  EXPECT_NEAR(s.recoil_velocity, constants::hbar * cfg.wavenumber() / cfg.atom_mass, 1e-12);
  EXPECT_NEAR(s.tilt, 0.0716, 5e-4);
}

TEST(Units, NoGravityNoLadder) {
  LatticeConfig cfg;
  cfg.gravity = 0.0;
  EXPECT_EQ(bloch_frequency(cfg), 0.0);
  EXPECT_EQ(lattice_scales(cfg).tilt, 0.0);
}

TEST(Validate, DurationFromCycles) {
  DriveConfig d;
  d.detuning = 2.0;
  d.cycle_count = 100;
  const auto v = validate_config({}, d, {});
  ASSERT_TRUE(v.ok()) << v.describe();
  const double nu = bloch_frequency(LatticeConfig{}) + 2.0;
  EXPECT_NEAR(v.config->duration, 100.0 / nu, 1e-15);
  EXPECT_NEAR(v.config->drive_frequency, nu, 1e-12);
}

TEST(Validate, CyclesFromIntegralDuration) {
  DriveConfig d;
  d.duration = 80.0 / bloch_frequency(LatticeConfig{});
  const auto v = validate_config({}, d, {});
  ASSERT_TRUE(v.ok());
  ASSERT_TRUE(v.config->drive.cycle_count.has_value());
  EXPECT_EQ(*v.config->drive.cycle_count, 80);
}

TEST(Validate, InconsistentFieldsNamed) {
  DriveConfig d;
  d.duration = 1.0;
  d.cycle_count = 3;
  const auto v = validate_config({}, d, {});
  ASSERT_FALSE(v.ok());
  bool dur = false, cyc = false;
  for (const auto& e : v.errors) {
    dur |= e.field == "drive.duration";
    cyc |= e.field == "drive.cycle_count";
  }
  EXPECT_TRUE(dur && cyc);
  EXPECT_NE(v.describe().find("drive.cycle_count"), std::string::npos);
}

TEST(Validate, MissingDurationRejected) {
  const auto v = validate_config({}, DriveConfig{}, {});
  EXPECT_FALSE(v.ok());
}

TEST(Validate, NegativeValuesRejected) {
  LatticeConfig l;
  l.lattice_depth = -1.0;
  DriveConfig d;
  d.duration = 0.1;
  d.tunneling_rate = -5.0;
  EnsembleConfig e;
  e.initial_rms_width = 0.0;
  const auto v = validate_config(l, d, e);
  ASSERT_FALSE(v.ok());
  EXPECT_EQ(v.errors.size(), 3u);
}

TEST(Validate, LargeAmplitudeWarnsOnly) {
  DriveConfig d;
  d.duration = 0.1;
  d.amplitude_pp = 12.0;
  const auto v = validate_config({}, d, {});
  EXPECT_TRUE(v.ok());
  EXPECT_EQ(v.warnings.size(), 1u);
}

TEST(Validate, ZeroDurationAllowed) {
  DriveConfig d;
  d.duration = 0.0;
  const auto v = validate_config({}, d, {});
  ASSERT_TRUE(v.ok());
  EXPECT_EQ(v.config->duration, 0.0);
}

TEST(Validate, CyclesForRounds) {
  EXPECT_EQ(cycles_for(1.0, 574.4), 574);
  EXPECT_EQ(cycles_for(0.0, 574.4), 0);
}
