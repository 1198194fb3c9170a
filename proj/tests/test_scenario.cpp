// Config parsing, CSV output, scenario runs and the command line.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wsdrive/scenario.hpp"

using namespace wsdrive;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("wsdrive-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(WSDRIVE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// io
// ---------------------------------------------------------------------------

TEST(Io, FnvReferenceVectors) {
  EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(fnv1a64("foobar")), "85944171f73967e8");
}

TEST(Io, CsvRoundTripIsExact) {
  CsvTable t;
  t.columns = {"x_m", "y"};
  t.metadata.push_back({"note", "values"});
  t.add_row({0.1, 1.0 / 3.0});
  t.add_row({-2.5e-300, 6.02214076e23});
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  write_text(dir / "t.csv", t.str());
  const auto r = read_csv(dir / "t.csv");
  EXPECT_EQ(r.columns, t.columns);
  ASSERT_EQ(r.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(r.rows[i], t.rows[i]);
  EXPECT_NE(t.str().find("# note: values"), std::string::npos);
  EXPECT_THROW(t.add_row({1.0}), ValidationError);
  fs::remove_all(dir);
}

TEST(Io, BandAndEnvelopeExports) {
  LatticeConfig lat;
  const auto band = band_csv(band_structure(lat, 21, 16));
  EXPECT_EQ(band.rows.size(), 16u);
  const auto env = envelope_csv(wannier_envelope(lat, EnvelopeModel::gaussian));
  EXPECT_EQ(env.rows.size(), std::size_t(2 * 8 * 32 + 1));
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

TEST(Config, BuiltinsMatchShippedFiles) {
  for (const auto& name : builtin_scenarios()) {
    const auto path = fs::path(WSDRIVE_SOURCE_DIR) / "scenarios" / (name + ".json");
    ASSERT_TRUE(fs::exists(path)) << path;
    std::ifstream is(path);
    EXPECT_EQ(json::parse(is), builtin_document(name)) << name;
    EXPECT_NO_THROW(parse_scenario(builtin_document(name))) << name;
  }
  EXPECT_EQ(builtin_scenarios().size(), 8u);
}

TEST(Config, UnknownKeysRejected) {
  auto doc = builtin_document("fig2a");
  doc["drive"]["detunning"] = 3;
  EXPECT_THROW(parse_scenario(doc), ValidationError);
  doc = builtin_document("fig2a");
  doc["params"]["sampels"] = 3;
  EXPECT_THROW(parse_scenario(doc), ValidationError);
  doc = builtin_document("fig2a");
  doc["extra"] = 1;
  EXPECT_THROW(parse_scenario(doc), ValidationError);
  doc = builtin_document("fig2a");
  doc["kind"] = "nope";
  EXPECT_THROW(parse_scenario(doc), ValidationError);
}

TEST(Config, WrongTypesRejected) {
  auto doc = builtin_document("fig2a");
  doc["drive"]["detuning"] = "five";
  EXPECT_THROW(parse_scenario(doc), ValidationError);
}

TEST(Config, Overrides) {
  auto doc = builtin_document("fig2a");
  apply_override(doc, "drive.detuning=-5");
  apply_override(doc, "basis.envelope=gaussian");
  apply_override(doc, "params.samples=11");
  const auto c = parse_scenario(doc);
  EXPECT_EQ(c.drive.detuning, -5.0);
  EXPECT_EQ(c.basis.envelope, EnvelopeModel::gaussian);
  EXPECT_EQ(c.params["samples"].get<int>(), 11);
  EXPECT_THROW(apply_override(doc, "drive.detuning"), ValidationError);
  EXPECT_THROW(apply_override(doc, "drive..x=1"), ValidationError);
}

TEST(Config, DefaultsFilled) {
  const json doc = {{"name", "x"}, {"kind", "width-series"}, {"drive", {{"duration", 1.0}}}};
  const auto c = parse_scenario(doc);
  EXPECT_EQ(c.lattice.lattice_depth, 8.0);
  EXPECT_EQ(c.params["samples"].get<int>(), 101);
  EXPECT_EQ(c.seed, 1u);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

TEST(Run, ManifestDescribesFiles) {
  const auto out = scratch("manifest");
  const auto r = run_scenario(parse_scenario(builtin_document("fig2a")), out);
  const auto manifest = json::parse(slurp(out / "fig2a" / "manifest.json"));
  ASSERT_FALSE(manifest["files"].empty());
  for (const auto& f : manifest["files"]) {
    const auto body = slurp(out / "fig2a" / f["file"].get<std::string>());
    EXPECT_EQ(f["bytes"].get<std::size_t>(), body.size());
    EXPECT_EQ(f["fnv1a64"].get<std::string>(), hex64(fnv1a64(body)));
  }
  EXPECT_TRUE(fs::exists(out / "fig2a" / "config.json"));
  EXPECT_NEAR(r.summary["revival_period_s"].get<double>(), 0.2, 1e-15);
  fs::remove_all(out);
}

TEST(Run, SeededNoiseIsDeterministic) {
  const auto a = scratch("seed-a"), b = scratch("seed-b"), c = scratch("seed-c");
  auto doc = builtin_document("fig2c");
  run_scenario(parse_scenario(doc), a);
  run_scenario(parse_scenario(doc), b);
  doc["seed"] = 99;
  run_scenario(parse_scenario(doc), c);
  for (const auto& e : fs::directory_iterator(a / "fig2c")) {
    const auto name = e.path().filename();
    EXPECT_EQ(slurp(e.path()), slurp(b / "fig2c" / name)) << name;
  }
  EXPECT_NE(slurp(a / "fig2c" / "widths.csv"), slurp(c / "fig2c" / "widths.csv"));
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(Run, ZeroDurationDriveIsUndriven) {
  const auto out = scratch("zero");
  auto doc = builtin_document("fig2a");
  doc["drive"]["duration"] = 0.0;
  doc["params"]["samples"] = 5;
  const auto r = run_scenario(parse_scenario(doc), out);
  EXPECT_EQ(r.summary["final_width_m"].get<double>(), 31e-6);
  fs::remove_all(out);
}

TEST(Run, FailureLeavesNoPartialOutput) {
  const auto out = scratch("fail");
  fs::create_directories(out / "fig3-cycles");
  write_text(out / "fig3-cycles" / "keep.txt", "unrelated\n");
  auto doc = builtin_document("fig3-cycles");
  doc["params"]["cycles"] = json::array({0, 20, 500});
  try {
    run_scenario(parse_scenario(doc), out);
    FAIL();
  } catch (const ScenarioFailure& e) {
    EXPECT_EQ(e.exit_code(), 1);
    EXPECT_NE(std::string(e.what()).find("fig3-cycles"), std::string::npos);
  }
  std::vector<std::string> left;
  for (const auto& e : fs::directory_iterator(out / "fig3-cycles")) left.push_back(e.path().filename().string());
  EXPECT_EQ(left, std::vector<std::string>{"keep.txt"});
  fs::remove_all(out);
}

TEST(Run, NumericFailureAfterOutputsIsCleanedUp) {
  // widths.csv is written before the fit runs; the fit then fails.
  const auto out = scratch("numeric");
  auto doc = builtin_document("fig2c");
  doc["drive"]["tunneling_rate"] = 0.0;
  doc["params"]["noise_relative"] = 0.0;
  try {
    run_scenario(parse_scenario(doc), out);
    FAIL();
  } catch (const ScenarioFailure& e) {
    EXPECT_EQ(e.exit_code(), 2);
  }
  EXPECT_FALSE(fs::exists(out / "fig2c"));
  fs::remove_all(out);
}

TEST(Run, InvalidConfigIsValidationFailure) {
  auto doc = builtin_document("fig2a");
  doc["drive"]["cycle_count"] = 3;
  try {
    run_scenario(parse_scenario(doc), scratch("invalid"));
    FAIL();
  } catch (const ScenarioFailure& e) {
    EXPECT_EQ(e.exit_code(), 1);
    EXPECT_NE(std::string(e.what()).find("drive.cycle_count"), std::string::npos);
  }
}

TEST(Run, ParallelMatchesSerial) {
  const auto a = scratch("serial"), b = scratch("parallel");
  std::vector<ScenarioConfig> cfgs;
  for (const char* n : {"fig2a", "fig2b", "fig2c", "fig1-revival"}) cfgs.push_back(parse_scenario(builtin_document(n)));
  run_scenarios(cfgs, a, 1);
  run_scenarios(cfgs, b, 4);
  for (const auto& c : cfgs)
    for (const auto& e : fs::directory_iterator(a / c.name))
      EXPECT_EQ(slurp(e.path()), slurp(b / c.name / e.path().filename())) << e.path();
  cfgs.push_back(cfgs.front());
  EXPECT_THROW(run_scenarios(cfgs, a, 2), ValidationError);
  fs::remove_all(a);
  fs::remove_all(b);
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

TEST(Cli, ExitCodes) {
  const auto out = scratch("cli");
  EXPECT_EQ(cli("--list"), 0);
  EXPECT_EQ(cli("run fig2a --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "fig2a" / "manifest.json"));
  EXPECT_EQ(cli("run no-such-scenario --out " + out.string()), 1);
  EXPECT_EQ(cli("run fig2a --override drive.bogus=1 --out " + out.string()), 1);
  EXPECT_EQ(cli("run fig2a --override drive.duration=-1 --out " + out.string()), 1);
  EXPECT_EQ(cli("run fig2c --override drive.tunneling_rate=0 --override params.noise_relative=0 --out " +
                out.string()),
            2);
  fs::remove_all(out);
}

TEST(Cli, RunsScenarioFiles) {
  const auto out = scratch("cli-file");
  fs::create_directories(out);
  auto doc = builtin_document("fig2b");
  doc["name"] = "custom";
  write_text(out / "custom.json", doc.dump());
  EXPECT_EQ(cli("run " + (out / "custom.json").string() + " --seed 5 --out " + (out / "res").string()), 0);
  const auto cfg = json::parse(slurp(out / "res" / "custom" / "config.json"));
  EXPECT_EQ(cfg["seed"].get<int>(), 5);
  fs::remove_all(out);
}
