#pragma once

// Scenario configs (JSON), builtin scenarios for the paper figures, and the
// runner that writes CSV outputs plus a manifest.json with checksums.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "wsdrive/analytic.hpp"
#include "wsdrive/ensemble.hpp"
#include "wsdrive/error.hpp"
#include "wsdrive/io.hpp"
#include "wsdrive/lattice.hpp"
#include "wsdrive/oracle.hpp"
#include "wsdrive/tof.hpp"
#include "wsdrive/units.hpp"

namespace wsdrive {

using json = nlohmann::json;

struct ScenarioConfig {
  std::string name;
  std::string kind;
  std::string description;
  LatticeConfig lattice;
  DriveConfig drive;
  EnsembleConfig ensemble;
  BasisOptions basis;
  json params = json::object();
  std::uint64_t seed = 1;
  json source;  // the document the config was parsed from
};

// A failed scenario: which one, where, and the exit code class.
class ScenarioFailure : public std::runtime_error {
public:
  ScenarioFailure(std::string scenario, std::string operation, const std::string& message, int exit_code)
      : std::runtime_error("scenario '" + scenario + "' failed in " + operation + ": " + message),
        scenario_(std::move(scenario)), operation_(std::move(operation)), exit_code_(exit_code) {}
  const std::string& scenario() const { return scenario_; }
  const std::string& operation() const { return operation_; }
  int exit_code() const { return exit_code_; }

private:
  std::string scenario_, operation_;
  int exit_code_;
};

inline const std::vector<std::string>& scenario_kinds() {
  static const std::vector<std::string> kinds{"insitu-revival", "width-series", "tof-cycles",
                                              "bloch-sweep",    "tof-revival",  "oracle-gate"};
  return kinds;
}

namespace detail {

inline void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ValidationError(section + ": must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ValidationError(section + ": unknown key '" + k + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(section + "." + key + ": wrong type");
  }
}

inline void read_optional(const json& obj, const char* key, std::optional<double>& out, const std::string& section) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  double v = 0.0;
  read(obj, key, v, section);
  out = v;
}

inline void read_optional(const json& obj, const char* key, std::optional<long>& out, const std::string& section) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  long v = 0;
  read(obj, key, v, section);
  out = v;
}

// Allowed parameter keys per kind, with defaults.
inline json kind_defaults(const std::string& kind) {
  if (kind == "insitu-revival")
    return {{"snapshot_times", json::array({0.0})}, {"width_samples", 101}, {"damping_time", nullptr},
            {"output_stride", 1}};
  if (kind == "width-series")
    return {{"samples", 101}, {"damping_time", nullptr}, {"noise_relative", 0.0}, {"fit", false}};
  if (kind == "tof-cycles")
    return {{"cycles", json::array({0})}, {"tof_time", 0.015}, {"filling_fraction", 1.0}, {"mode", "farfield"},
            {"free_fall", false}, {"output_stride", 1}};
  if (kind == "bloch-sweep")
    return {{"hold_span_periods", 2.0}, {"samples", 161}, {"tof_time", 0.015}, {"density_holds_periods", json::array()},
            {"output_stride", 1}};
  if (kind == "tof-revival")
    return {{"tof_times", json::array({0.0})}, {"mode", "exact"}, {"free_fall", false}, {"output_stride", 1}};
  if (kind == "oracle-gate")
    return {{"sites", 64},        {"points_per_site", 32},     {"snapshots", 10},
            {"calibration_periods", 6.0}, {"stationarity_periods", 5.0}, {"richardson_periods", 1.0},
            {"relax_time", default_relax_time}, {"l1_gate", 0.05}};
  throw ValidationError("scenario.kind: unknown kind '" + kind + "'");
}

}  // namespace detail

// Parses a scenario document; unknown keys are errors so typos in files or
// overrides do not pass silently.
inline ScenarioConfig parse_scenario(const json& doc) {
  ScenarioConfig c;
  c.source = doc;
  detail::reject_unknown(doc, "scenario",
                         {"name", "kind", "description", "seed", "lattice", "drive", "ensemble", "basis", "params"});
  detail::read(doc, "name", c.name, "scenario");
  detail::read(doc, "kind", c.kind, "scenario");
  detail::read(doc, "description", c.description, "scenario");
  detail::read(doc, "seed", c.seed, "scenario");
  if (c.name.empty()) throw ValidationError("scenario.name: required");

  const json empty = json::object();
  const json& lat = doc.contains("lattice") ? doc["lattice"] : empty;
  detail::reject_unknown(lat, "lattice", {"atom_mass", "lattice_wavelength", "lattice_depth", "gravity"});
  detail::read(lat, "atom_mass", c.lattice.atom_mass, "lattice");
  detail::read(lat, "lattice_wavelength", c.lattice.lattice_wavelength, "lattice");
  detail::read(lat, "lattice_depth", c.lattice.lattice_depth, "lattice");
  detail::read(lat, "gravity", c.lattice.gravity, "lattice");

  const json& dr = doc.contains("drive") ? doc["drive"] : empty;
  detail::reject_unknown(dr, "drive",
                         {"amplitude_pp", "detuning", "tunneling_rate", "duration", "cycle_count", "phase_origin"});
  detail::read(dr, "amplitude_pp", c.drive.amplitude_pp, "drive");
  detail::read(dr, "detuning", c.drive.detuning, "drive");
  detail::read(dr, "tunneling_rate", c.drive.tunneling_rate, "drive");
  detail::read_optional(dr, "duration", c.drive.duration, "drive");
  detail::read_optional(dr, "cycle_count", c.drive.cycle_count, "drive");
  detail::read(dr, "phase_origin", c.drive.phase_origin, "drive");

  const json& en = doc.contains("ensemble") ? doc["ensemble"] : empty;
  detail::reject_unknown(en, "ensemble", {"initial_rms_width", "site_window", "sample_count"});
  detail::read(en, "initial_rms_width", c.ensemble.initial_rms_width, "ensemble");
  detail::read(en, "site_window", c.ensemble.site_window, "ensemble");
  detail::read(en, "sample_count", c.ensemble.sample_count, "ensemble");

  const json& ba = doc.contains("basis") ? doc["basis"] : empty;
  detail::reject_unknown(ba, "basis", {"envelope", "ws_model", "points_per_site", "envelope_half_width", "plane_waves"});
  std::string envelope = "numeric", ws_model = "tight-binding";
  detail::read(ba, "envelope", envelope, "basis");
  detail::read(ba, "ws_model", ws_model, "basis");
  if (envelope != "numeric" && envelope != "gaussian") throw ValidationError("basis.envelope: numeric or gaussian");
  if (ws_model != "tight-binding" && ws_model != "band") throw ValidationError("basis.ws_model: tight-binding or band");
  c.basis.envelope = envelope == "numeric" ? EnvelopeModel::numeric : EnvelopeModel::gaussian;
  c.basis.ws_model = ws_model == "band" ? WsModel::band : WsModel::tight_binding;
  detail::read(ba, "points_per_site", c.basis.points_per_site, "basis");
  detail::read(ba, "envelope_half_width", c.basis.envelope_half_width, "basis");
  detail::read(ba, "plane_waves", c.basis.plane_waves, "basis");

  c.params = detail::kind_defaults(c.kind);
  if (doc.contains("params")) {
    const json& p = doc["params"];
    if (!p.is_object()) throw ValidationError("params: must be an object");
    for (const auto& [k, v] : p.items()) {
      if (!c.params.contains(k)) throw ValidationError("params: unknown key '" + k + "' for kind " + c.kind);
      c.params[k] = v;
    }
  }
  return c;
}

// key=value with a dotted key; the value is read as JSON when it parses,
// otherwise as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  std::string pointer;
  std::size_t start = 0;
  while (start <= key.size()) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("override '" + assignment + "': empty key segment");
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  doc[json::json_pointer(pointer)] = value;
}

// ---------------------------------------------------------------------------
// Builtin scenarios.  The same documents ship as scenarios/<name>.json.
// ---------------------------------------------------------------------------

inline const std::map<std::string, std::string>& builtin_documents() {
  static const std::map<std::string, std::string> docs{
      {"fig1-revival", R"({
  "name": "fig1-revival",
  "kind": "insitu-revival",
  "description": "Near-resonant drive: in-situ breathing to millimetre extent and revival after 3.8 s",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 1, "detuning": 0.2631578947368421, "tunneling_rate": 1200, "duration": 3.8},
  "ensemble": {"initial_rms_width": 31e-6},
  "params": {"snapshot_times": [0, 0.95, 1.9, 2.85, 3.8], "width_samples": 381, "output_stride": 8}
})"},
      {"fig2a", R"({
  "name": "fig2a",
  "kind": "width-series",
  "description": "Breathing of the in-situ width at +5 Hz detuning",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 1, "detuning": 5, "tunneling_rate": 1000, "duration": 1.0},
  "ensemble": {"initial_rms_width": 31e-6},
  "params": {"samples": 201}
})"},
      {"fig2b", R"({
  "name": "fig2b",
  "kind": "width-series",
  "description": "Breathing of the in-situ width at -5 Hz detuning",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 1, "detuning": -5, "tunneling_rate": 1000, "duration": 1.0},
  "ensemble": {"initial_rms_width": 31e-6},
  "params": {"samples": 201}
})"},
      {"fig2c", R"({
  "name": "fig2c",
  "kind": "width-series",
  "description": "Damped breathing at -0.5 Hz detuning with 28 s decay, seeded noise and a damping fit",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 0.2, "detuning": -0.5, "tunneling_rate": 100, "duration": 20.0},
  "ensemble": {"initial_rms_width": 31e-6},
  "params": {"samples": 401, "damping_time": 28.0, "noise_relative": 0.01, "fit": true}
})"},
      {"fig3-cycles", R"({
  "name": "fig3-cycles",
  "kind": "tof-cycles",
  "description": "Resonant drive for 0 to 120 cycles followed by 15 ms time of flight",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 1, "detuning": 0, "tunneling_rate": 300, "cycle_count": 120,
            "phase_origin": -1.5707963267948966},
  "ensemble": {"initial_rms_width": 31e-6},
  "params": {"cycles": [0, 20, 40, 60, 80, 100, 120], "tof_time": 0.015, "filling_fraction": 0.5,
             "mode": "exact", "output_stride": 16}
})"},
      {"fig4-bloch", R"({
  "name": "fig4-bloch",
  "kind": "bloch-sweep",
  "description": "Time-of-flight interference peak versus hold time after 80 resonant cycles",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 1, "detuning": 0, "tunneling_rate": 300, "cycle_count": 80,
            "phase_origin": -1.5707963267948966},
  "ensemble": {"initial_rms_width": 31e-6},
  "params": {"hold_span_periods": 2, "samples": 161, "tof_time": 0.015,
             "density_holds_periods": [0, 0.25, 0.5, 0.75, 1], "output_stride": 16}
})"},
      {"fig5-revival-tof", R"({
  "name": "fig5-revival-tof",
  "kind": "tof-revival",
  "description": "Time of flight at 2.28 Hz detuning: undriven, maximum expansion and first revival",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 1, "detuning": 2.28, "tunneling_rate": 300, "duration": 0.43859649122807015,
            "phase_origin": -1.5707963267948966},
  "ensemble": {"initial_rms_width": 31e-6},
  "params": {"tof_times": [0, 0.010, 0.015], "mode": "exact", "output_stride": 16}
})"},
      {"oracle-gate", R"({
  "name": "oracle-gate",
  "kind": "oracle-gate",
  "description": "Split-step integration against the closed form: calibrated resonant drive over 10 Bloch periods",
  "seed": 1,
  "lattice": {"lattice_depth": 8, "gravity": 9.7973},
  "drive": {"amplitude_pp": 1, "detuning": 0, "tunneling_rate": 0, "cycle_count": 10},
  "params": {"sites": 64, "points_per_site": 32, "snapshots": 10}
})"},
  };
  return docs;
}

inline std::vector<std::string> builtin_scenarios() {
  std::vector<std::string> names;
  for (const auto& [name, doc] : builtin_documents()) names.push_back(name);
  return names;
}

inline json builtin_document(const std::string& name) {
  const auto& docs = builtin_documents();
  const auto it = docs.find(name);
  if (it == docs.end()) throw ValidationError("unknown builtin scenario '" + name + "'");
  return json::parse(it->second);
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string file;
  std::size_t bytes = 0;
  std::string checksum;  // FNV-1a 64, hex
};

struct RunResult {
  std::string scenario;
  std::filesystem::path directory;
  std::vector<ManifestEntry> files;
  std::vector<std::string> warnings;
  json summary = json::object();
};

namespace detail {

class OutputSet {
public:
  OutputSet(std::filesystem::path dir, std::string scenario, std::string config_checksum, std::uint64_t seed)
      : dir_(std::move(dir)), scenario_(std::move(scenario)), checksum_(std::move(config_checksum)), seed_(seed) {}

  void csv(const std::string& file, CsvTable table, const std::string& content) {
    table.metadata.insert(table.metadata.begin(), {{"scenario", scenario_},
                                                   {"scenario_checksum", checksum_},
                                                   {"seed", std::to_string(seed_)},
                                                   {"content", content}});
    text(file, table.str());
  }

  void text(const std::string& file, const std::string& body) {
    if (!std::filesystem::exists(dir_)) {
      std::filesystem::create_directories(dir_);
      created_dir_ = true;
    }
    written_.push_back(dir_ / file);
    write_text(dir_ / file, body);
    entries_.push_back({file, body.size(), hex64(fnv1a64(body))});
  }

  void discard() noexcept {
    std::error_code ec;
    for (const auto& p : written_) std::filesystem::remove(p, ec);
    if (created_dir_ && std::filesystem::is_empty(dir_, ec)) std::filesystem::remove(dir_, ec);
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }

private:
  std::filesystem::path dir_;
  std::string scenario_, checksum_;
  std::uint64_t seed_;
  std::vector<std::filesystem::path> written_;
  std::vector<ManifestEntry> entries_;
  bool created_dir_ = false;
};

// Rows where the density exceeds 1e-12 of its peak, every stride-th sample.
inline CsvTable profile_table(const DensityProfile& p, int stride = 1) {
  CsvTable t;
  t.columns = {"position_m", "density_per_m"};
  t.metadata.push_back({"time_s", format_number(p.time)});
  t.metadata.push_back({"provenance", to_string(p.provenance)});
  const double peak = *std::max_element(p.density.begin(), p.density.end());
  std::size_t lo = 0, hi = p.density.size();
  while (lo + 1 < hi && p.density[lo] < 1e-12 * peak) ++lo;
  while (hi > lo + 1 && p.density[hi - 1] < 1e-12 * peak) --hi;
  for (std::size_t i = lo; i < hi; i += std::size_t(std::max(1, stride))) t.add_row({p.positions[i], p.density[i]});
  return t;
}

struct Context {
  const ScenarioConfig& cfg;
  ValidatedConfig valid;
  OutputSet& out;
  RunResult& result;

  template <class F>
  auto stage(const std::string& operation, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const ValidationError& e) {
      throw ScenarioFailure(cfg.name, operation, e.what(), 1);
    } catch (const NoRevivalError& e) {
      throw ScenarioFailure(cfg.name, operation, e.what(), 1);
    } catch (const NumericError& e) {
      throw ScenarioFailure(cfg.name, operation, e.what(), 2);
    } catch (const json::exception& e) {
      throw ScenarioFailure(cfg.name, operation, e.what(), 1);
    }
  }

  template <class T>
  T param(const char* key) const {
    try {
      return cfg.params.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("params." + std::string(key) + ": wrong type");
    }
  }
  std::optional<double> optional_param(const char* key) const {
    const auto& v = cfg.params.at(key);
    if (v.is_null()) return std::nullopt;
    return param<double>(key);
  }

  SiteBasis basis() { return stage("build_site_basis", [&] { return build_site_basis(valid.lattice, cfg.basis); }); }
};

// Calls f(i) for i < n on the hardware threads; each index is written by
// exactly one call, so results do not depend on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = next++; i < n; i = next++) f(i);
    } catch (...) {
      errors[w] = std::current_exception();
      next = n;
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
  if (workers > 0) work(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<double> linspace(double a, double b, int n) {
  if (n < 1) throw ValidationError("samples must be at least 1");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[std::size_t(i)] = n == 1 ? a : a + (b - a) * double(i) / double(n - 1);
  return v;
}

inline void run_insitu_revival(Context& c) {
  const auto basis = c.basis();
  const double duration = c.valid.duration;
  std::vector<double> snaps = c.param<std::vector<double>>("snapshot_times");
  snaps.erase(std::remove_if(snaps.begin(), snaps.end(), [&](double t) { return t > duration || t < 0.0; }),
              snaps.end());
  if (duration == 0.0 || snaps.empty()) snaps = {0.0};
  const int stride = c.param<int>("output_stride");
  CsvTable summary;
  summary.columns = {"time_s", "rms_width_m", "profile_rms_width_m"};
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const auto prof = c.stage("insitu_density", [&] {
      return insitu_density(snaps[i], c.valid.drive, c.valid.lattice, c.valid.ensemble, basis);
    });
    c.out.csv("profile_" + std::to_string(i) + ".csv", profile_table(prof, stride), "in-situ density profile");
    const double w = rms_width_sites(drive_argument(c.valid.drive, snaps[i]),
                                     c.valid.ensemble.initial_rms_width / c.valid.lattice.period()) *
                     c.valid.lattice.period();
    summary.add_row({snaps[i], w, prof.rms_width()});
  }
  c.out.csv("snapshots.csv", summary, "closed-form and profile RMS widths at the snapshot times");

  const int n = duration == 0.0 ? 1 : c.param<int>("width_samples");
  const auto times = linspace(0.0, duration, n);
  DampingModel damping;
  if (auto tau = c.optional_param("damping_time")) damping.damping_time = *tau;
  const auto series = c.stage("width_timeseries", [&] {
    return width_timeseries(times, c.valid.drive, c.valid.lattice, c.valid.ensemble, damping);
  });
  CsvTable widths;
  widths.columns = {"time_s", "width_m"};
  for (std::size_t i = 0; i < series.times.size(); ++i) widths.add_row({series.times[i], series.widths[i]});
  c.out.csv("widths.csv", widths, "RMS width time series");
  c.result.summary["final_width_m"] = series.widths.back();
  c.result.summary["initial_width_m"] = series.widths.front();
}

inline void run_width_series(Context& c) {
  const double duration = c.valid.duration;
  const int n = duration == 0.0 ? 1 : c.param<int>("samples");
  const auto times = linspace(0.0, duration, n);
  DampingModel damping;
  if (auto tau = c.optional_param("damping_time")) damping.damping_time = *tau;
  auto series = c.stage("width_timeseries", [&] {
    return width_timeseries(times, c.valid.drive, c.valid.lattice, c.valid.ensemble, damping);
  });
  const double noise = c.param<double>("noise_relative");
  if (noise < 0.0) throw ScenarioFailure(c.cfg.name, "noise", "params.noise_relative must be non-negative", 1);
  if (noise > 0.0) {
    std::mt19937_64 rng(c.cfg.seed);
    std::normal_distribution<double> gauss(0.0, noise);
    for (double& w : series.widths) w *= 1.0 + gauss(rng);
  }
  CsvTable widths;
  widths.columns = {"time_s", "width_m"};
  for (std::size_t i = 0; i < series.times.size(); ++i) widths.add_row({series.times[i], series.widths[i]});
  if (c.cfg.drive.detuning != 0.0)
    widths.metadata.push_back({"revival_period_s", format_number(revival_time(c.valid.drive.detuning))});
  c.out.csv("widths.csv", widths, "RMS width time series");
  c.result.summary["initial_width_m"] = series.widths.front();
  c.result.summary["final_width_m"] = series.widths.back();
  if (c.cfg.drive.detuning != 0.0) c.result.summary["revival_period_s"] = revival_time(c.valid.drive.detuning);

  if (c.param<bool>("fit")) {
    const auto fit = c.stage("fit_damping", [&] { return fit_damping(series); });
    CsvTable t;
    t.columns = {"period_s", "damping_time_s", "amplitude", "rms_residual", "damping_resolved"};
    t.add_row({fit.period, fit.damping_time, fit.amplitude, fit.rms_residual, fit.damping_resolved ? 1.0 : 0.0});
    c.out.csv("fit.csv", t, "damped breathing fit");
    c.result.summary["fitted_period_s"] = fit.period;
    c.result.summary["fitted_damping_time_s"] = fit.damping_time;
  }
}

inline TofMode tof_mode(const Context& c) {
  const auto m = c.param<std::string>("mode");
  if (m == "farfield") return TofMode::farfield;
  if (m == "exact") return TofMode::exact;
  throw ScenarioFailure(c.cfg.name, "tof mode", "params.mode must be farfield or exact", 1);
}

inline void run_tof_cycles(Context& c) {
  const auto basis = c.basis();
  const auto cycles = c.param<std::vector<long>>("cycles");
  const double tof = c.param<double>("tof_time");
  const double fill = c.param<double>("filling_fraction");
  if (!(fill >= 0.0 && fill <= 1.0))
    throw ScenarioFailure(c.cfg.name, "tof-cycles", "params.filling_fraction must lie in [0, 1]", 1);
  const long max_cycles = *std::max_element(cycles.begin(), cycles.end());
  if (c.valid.drive.cycle_count && max_cycles > *c.valid.drive.cycle_count)
    throw ScenarioFailure(c.cfg.name, "tof-cycles", "params.cycles exceeds drive.cycle_count", 1);
  if (*std::min_element(cycles.begin(), cycles.end()) < 0)
    throw ScenarioFailure(c.cfg.name, "tof-cycles", "params.cycles must be non-negative", 1);
  const double nu = c.valid.drive_frequency;
  TofOptions opt;
  opt.mode = tof_mode(c);
  opt.free_fall = c.param<bool>("free_fall");

  const auto widest = c.stage("amplitude_row", [&] {
    return amplitude_row(0, double(max_cycles) / nu, c.valid.drive, basis.bloch_hz);
  });
  const int window = int(widest.amplitudes.size() / 2);
  opt.grid_sites = c.stage("tof grid", [&] {
    return opt.mode == TofMode::exact ? exact_tof_sites(widest, basis, c.valid.lattice, tof)
                                      : required_momentum_sites(widest, basis);
  });
  const auto row0 = amplitude_row(0, 0.0, c.valid.drive, basis.bloch_hz, window);
  const auto undriven = c.stage("tof_profile", [&] { return tof_profile(row0, basis, c.valid.lattice, 0.0, tof, opt); });

  CsvTable summary;
  summary.columns = {"cycles", "drive_time_s", "narrow_peak_fwhm_m", "weight"};
  for (long n : cycles) {
    const double t = double(n) / nu;
    const auto row = c.stage("amplitude_row", [&] { return amplitude_row(0, t, c.valid.drive, basis.bloch_hz, window); });
    const auto driven = c.stage("tof_profile", [&] { return tof_profile(row, basis, c.valid.lattice, 0.0, tof, opt); });
    auto mixed = mix_profiles(driven.profile, undriven.profile, fill);
    mixed.time = tof;
    auto table = profile_table(mixed, c.param<int>("output_stride"));
    table.metadata.push_back({"cycles", std::to_string(n)});
    table.metadata.push_back({"filling_fraction", format_number(fill)});
    table.metadata.push_back({"mode", to_string(opt.mode)});
    c.out.csv("profile_c" + std::to_string(n) + ".csv", table, "time-of-flight density after driving");
    summary.add_row({double(n), t, peak_fwhm(mixed), mixed.integral()});
  }
  c.out.csv("summary.csv", summary, "narrow-peak width and total weight per cycle count");
}

inline void run_bloch_sweep(Context& c) {
  const auto basis = c.basis();
  const double nu_b = basis.bloch_hz;
  const double span = c.param<double>("hold_span_periods") / nu_b;
  const auto holds = linspace(0.0, span, c.param<int>("samples"));
  const double tof = c.param<double>("tof_time");
  const auto row = c.stage("amplitude_row", [&] { return amplitude_row(0, c.valid.duration, c.valid.drive, nu_b); });
  TofOptions opt;
  opt.mode = TofMode::exact;
  opt.grid_sites = c.stage("tof grid", [&] { return exact_tof_sites(row, basis, c.valid.lattice, tof); });

  std::vector<std::vector<double>> rows(holds.size());
  auto sweep = [&](std::size_t i) {
    const auto tp = c.stage("tof_profile", [&] { return tof_profile(row, basis, c.valid.lattice, holds[i], tof, opt); });
    rows[i] = {holds[i], tof_peak_momentum(tp, c.valid.lattice, row.center), bloch_peak_position(holds[i], nu_b)};
  };
  parallel_for(holds.size(), sweep);
  CsvTable peaks;
  peaks.columns = {"hold_time_s", "peak_position_hbar_k", "predicted_hbar_k"};
  peaks.metadata.push_back({"bloch_period_s", format_number(1.0 / nu_b)});
  peaks.metadata.push_back({"tof_time_s", format_number(tof)});
  for (auto& r : rows) peaks.add_row(std::move(r));
  c.out.csv("peaks.csv", peaks, "time-of-flight interference peak position versus hold time");

  auto dens_holds = c.param<std::vector<double>>("density_holds_periods");
  for (double& h : dens_holds) h /= nu_b;
  const MomentumFrame frame(basis, required_momentum_sites(row, basis));
  for (std::size_t i = 0; i < dens_holds.size(); ++i) {
    const auto md = c.stage("momentum_density", [&] { return momentum_density(row, basis, dens_holds[i], frame); });
    CsvTable t;
    t.columns = {"momentum_hbar_k", "density_per_hbar_k"};
    t.metadata.push_back({"hold_time_s", format_number(dens_holds[i])});
    for (std::size_t k = 0; k < md.momentum.size(); ++k) t.add_row({md.momentum[k], md.density[k]});
    c.out.csv("momentum_" + std::to_string(i) + ".csv", t, "momentum density after hold");
    const auto tp = c.stage("tof_profile", [&] { return tof_profile(row, basis, c.valid.lattice, dens_holds[i], tof, opt); });
    auto table = profile_table(tp.profile, c.param<int>("output_stride"));
    table.metadata.push_back({"hold_time_s", format_number(dens_holds[i])});
    c.out.csv("profile_" + std::to_string(i) + ".csv", table, "time-of-flight density after hold");
  }
  c.result.summary["bloch_period_s"] = 1.0 / nu_b;
}

inline void run_tof_revival(Context& c) {
  const auto basis = c.basis();
  TofOptions opt;
  opt.mode = tof_mode(c);
  opt.free_fall = c.param<bool>("free_fall");
  const auto tofs = c.param<std::vector<double>>("tof_times");
  const auto set = c.stage("tof_scenario_revival", [&] {
    return tof_scenario_revival(c.valid.drive, basis, c.valid.lattice, tofs, opt);
  });
  static const char* stage_names[3] = {"undriven", "maximum", "revival"};
  CsvTable summary;
  summary.columns = {"stage", "drive_time_s", "tof_time_s", "l1_to_undriven", "rms_width_m"};
  summary.metadata.push_back({"stages", "0 undriven, 1 maximum expansion, 2 first revival"});
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < tofs.size(); ++i) {
      const auto& p = set.profiles[s][i];
      auto table = profile_table(p.profile, c.param<int>("output_stride"));
      table.metadata.push_back({"stage", stage_names[s]});
      table.metadata.push_back({"drive_time_s", format_number(set.drive_times[s])});
      table.metadata.push_back({"tof_time_s", format_number(p.tof_time)});
      c.out.csv(std::string("profile_") + stage_names[s] + "_" + std::to_string(i) + ".csv", table,
                "density after drive and time of flight");
      summary.add_row({double(s), set.drive_times[s], p.tof_time, l1_distance(p.profile, set.profiles[0][i].profile),
                       p.profile.rms_width()});
    }
  }
  c.out.csv("summary.csv", summary, "distance of each profile to the undriven one");
}

inline void run_oracle_gate(Context& c) {
  const auto basis = c.basis();
  const auto& lattice = c.valid.lattice;
  const auto scales = lattice_scales(lattice);
  const double nu = c.valid.drive_frequency;
  GridSpec grid;
  grid.sites = c.param<std::size_t>("sites");
  grid.points_per_site = c.param<std::size_t>("points_per_site");
  grid.origin = -long(grid.sites / 2);
  if (std::size_t(c.cfg.basis.points_per_site) != grid.points_per_site)
    throw ScenarioFailure(c.cfg.name, "oracle grid", "params.points_per_site must equal basis.points_per_site", 1);
  const double relax = c.param<double>("relax_time");
  const double bloch_period = 1.0 / scales.bloch_frequency;

  // Omega from the oracle itself.
  CalibrationOptions copt;
  copt.grid = grid;
  copt.duration_bloch_periods = c.param<double>("calibration_periods");
  const auto cal = c.stage("calibrate_omega", [&] {
    return calibrate_omega(lattice, basis, c.valid.drive.amplitude_pp, nu, copt);
  });
  CsvTable ct;
  ct.columns = {"time_s", "variance_growth_sites2"};
  ct.metadata.push_back({"omega_hz", format_number(cal.tunneling_rate)});
  ct.metadata.push_back({"relative_residual", format_number(cal.relative_residual)});
  for (std::size_t i = 0; i < cal.times.size(); ++i) ct.add_row({cal.times[i], cal.variances[i]});
  c.out.csv("calibration.csv", ct, "oracle WS-population variance growth used to fit Omega");

  DriveConfig drive = c.valid.drive;
  drive.tunneling_rate = cal.tunneling_rate;
  IntegratorConfig ic;
  ic.amplitude_pp = drive.amplitude_pp;
  ic.drive_frequency = nu;
  ic.phase_origin = drive.phase_origin;

  // Independent runs: gate, stationarity and the dt ladder.
  const int snapshots = c.param<int>("snapshots");
  const long total_cycles = cycles_for(c.valid.duration, nu);
  struct GateSample {
    double time, l1, fidelity, ws_l1;
    CsvTable populations;
  };
  auto gate_run = std::async(std::launch::async, [&] {
    return c.stage("split_step_evolve", [&] {
      std::vector<GateSample> samples;
      auto state = loaded_state(prepare_ws_numeric(lattice, basis, 0, grid, relax).state, lattice, ic, 0.0);
      long done = 0;
      for (int k = 1; k <= snapshots; ++k) {
        const long target = std::lround(double(total_cycles) * k / snapshots);
        evolve(state, lattice, ic, double(target - done) / nu);
        done = target;
        state.time = double(done) / nu;
        const auto row = amplitude_row(0, state.time, drive, basis.bloch_hz);
        const auto frame = comoving_state(state, lattice, ic);
        const auto cmp = compare_populations(frame, row, basis);
        auto table = cell_population_csv(frame);
        table.columns.push_back("analytic_ws_population");
        for (auto& r : table.rows) r.push_back(std::norm(row.at(int(r[0]))));
        samples.push_back({state.time, cmp.l1, cmp.fidelity, cmp.ws_l1, std::move(table)});
      }
      return samples;
    });
  });

  IntegratorConfig still;
  auto stationarity_run = std::async(std::launch::async, [&] {
    return c.stage("stationarity", [&] {
      auto prep = prepare_ws_numeric(lattice, basis, 0, grid, relax);
      const auto before = cell_populations(prep.state);
      const double e0 = static_energy(prep.state, lattice);
      evolve(prep.state, lattice, still, c.param<double>("stationarity_periods") * bloch_period);
      const auto after = cell_populations(prep.state);
      double d = 0.0;
      for (std::size_t i = 0; i < before.populations.size(); ++i)
        d = std::max(d, std::abs(after.populations[i] - before.populations[i]));
      return std::array<double, 3>{d, std::abs(static_energy(prep.state, lattice) - e0) / std::abs(e0),
                                   prep.overlap};
    });
  });

  const double ladder_time = c.param<double>("richardson_periods") * bloch_period;
  const double dt0 = max_time_step(ic, scales);
  std::array<std::future<GridState>, 3> ladder;
  for (int i = 0; i < 3; ++i) {
    ladder[std::size_t(i)] = std::async(std::launch::async, [&, i] {
      return c.stage("convergence ladder", [&] {
        IntegratorConfig step = ic;
        step.dt = dt0 / double(1 << i);
        auto s = loaded_state(prepare_ws_numeric(lattice, basis, 0, grid, relax).state, lattice, step, 0.0);
        evolve(s, lattice, step, ladder_time);
        return s;
      });
    });
  }

  const auto samples = gate_run.get();
  const auto still_result = stationarity_run.get();
  std::array<GridState, 3> rungs{ladder[0].get(), ladder[1].get(), ladder[2].get()};
  auto distance = [](const GridState& a, const GridState& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += std::norm(a.psi[j] - b.psi[j]);
    return std::sqrt(s * a.spacing);
  };
  const double ratio = distance(rungs[0], rungs[1]) / distance(rungs[1], rungs[2]);

  CsvTable gate;
  gate.columns = {"time_s", "l1_cells", "fidelity", "l1_ws_states"};
  gate.metadata.push_back({"omega_hz", format_number(cal.tunneling_rate)});
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    gate.add_row({samples[i].time, samples[i].l1, samples[i].fidelity, samples[i].ws_l1});
    worst = std::max(worst, samples[i].l1);
    c.out.csv("populations_" + std::to_string(i + 1) + ".csv", samples[i].populations,
              "oracle cell populations and closed-form WS populations");
  }
  c.out.csv("gate.csv", gate, "oracle versus closed form per snapshot");

  CsvTable checks;
  checks.columns = {"omega_hz", "max_l1", "l1_gate", "stationarity_max_change", "static_energy_drift",
                    "preparation_overlap", "richardson_ratio"};
  const double gate_value = c.param<double>("l1_gate");
  checks.add_row({cal.tunneling_rate, worst, gate_value, still_result[0], still_result[1], still_result[2], ratio});
  c.out.csv("checks.csv", checks, "oracle acceptance quantities");
  c.result.summary["omega_hz"] = cal.tunneling_rate;
  c.result.summary["max_l1"] = worst;
  c.result.summary["stationarity"] = still_result[0];
  c.result.summary["richardson_ratio"] = ratio;
  if (worst >= gate_value) c.result.warnings.push_back("oracle L1 distance above the gate");
}

}  // namespace detail

// Executes a scenario into out_root/<name>/.  Any failure removes the files
// this run wrote and is rethrown as ScenarioFailure.
inline RunResult run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_root) {
  const auto validation = validate_config(cfg.lattice, cfg.drive, cfg.ensemble);
  if (!validation.ok()) throw ScenarioFailure(cfg.name, "validate_config", validation.describe(), 1);

  json canonical = cfg.source;
  canonical["seed"] = cfg.seed;
  const std::string checksum = hex64(fnv1a64(canonical.dump()));

  RunResult result;
  result.scenario = cfg.name;
  result.directory = out_root / cfg.name;
  for (const auto& w : validation.warnings) result.warnings.push_back(w.field + ": " + w.message);
  detail::OutputSet out(result.directory, cfg.name, checksum, cfg.seed);
  detail::Context ctx{cfg, validation.value(), out, result};
  try {
    if (cfg.kind == "insitu-revival") detail::run_insitu_revival(ctx);
    else if (cfg.kind == "width-series") detail::run_width_series(ctx);
    else if (cfg.kind == "tof-cycles") detail::run_tof_cycles(ctx);
    else if (cfg.kind == "bloch-sweep") detail::run_bloch_sweep(ctx);
    else if (cfg.kind == "tof-revival") detail::run_tof_revival(ctx);
    else if (cfg.kind == "oracle-gate") detail::run_oracle_gate(ctx);
    else throw ScenarioFailure(cfg.name, "run", "unknown kind '" + cfg.kind + "'", 1);

    out.text("config.json", canonical.dump(2) + "\n");
    json manifest;
    manifest["scenario"] = cfg.name;
    manifest["kind"] = cfg.kind;
    manifest["scenario_checksum"] = checksum;
    manifest["seed"] = cfg.seed;
    manifest["warnings"] = result.warnings;
    manifest["summary"] = result.summary;
    manifest["files"] = json::array();
    for (const auto& e : out.entries())
      manifest["files"].push_back({{"file", e.file}, {"bytes", e.bytes}, {"fnv1a64", e.checksum}});
    result.files = out.entries();
    out.text("manifest.json", manifest.dump(2) + "\n");
  } catch (const ScenarioFailure&) {
    out.discard();
    throw;
  } catch (const std::exception& e) {
    out.discard();
    throw ScenarioFailure(cfg.name, "run", e.what(), 2);
  }
  return result;
}

// Runs independent scenarios on up to `workers` threads; results keep input
// order.  The first failure (in input order) is rethrown after all finish.
inline std::vector<RunResult> run_scenarios(const std::vector<ScenarioConfig>& configs,
                                            const std::filesystem::path& out_root, unsigned workers = 1) {
  std::set<std::string> names;
  for (const auto& c : configs)
    if (!names.insert(c.name).second) throw ValidationError("scenario name '" + c.name + "' used twice in one run");
  std::vector<std::optional<RunResult>> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = run_scenario(configs[i], out_root);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < std::max(1u, workers); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<RunResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace wsdrive
