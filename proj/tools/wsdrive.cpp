// Scenario runner.
//
//   wsdrive --list
//   wsdrive run fig2a --out results
//   wsdrive run my.json --override drive.detuning=-5 --seed 7
//   wsdrive run fig2a fig2b fig2c --parallel 3
//
// Exit codes: 0 success, 1 validation error, 2 numeric failure.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "wsdrive/scenario.hpp"

namespace {

wsdrive::json load_target(const std::string& target) {
  const auto& builtins = wsdrive::builtin_documents();
  if (builtins.count(target)) return wsdrive::builtin_document(target);
  std::ifstream is(target);
  if (!is) throw wsdrive::ValidationError("'" + target + "' is neither a builtin scenario nor a readable file");
  auto doc = wsdrive::json::parse(is, nullptr, false);
  if (doc.is_discarded()) throw wsdrive::ValidationError("'" + target + "' is not valid JSON");
  return doc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driven Wannier-Stark simulator: runs scenarios and writes CSV outputs"};
  app.require_subcommand(0, 1);
  bool list = false;
  app.add_flag("--list", list, "List builtin scenarios");

  auto* run = app.add_subcommand("run", "Run builtin scenarios or scenario files");
  std::vector<std::string> targets;
  std::string out = "wsdrive-out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  unsigned parallel = 1;
  run->add_option("targets", targets, "Scenario names or config paths")->required();
  run->add_option("--out", out, "Output directory")->capture_default_str();
  run->add_option("--override", overrides, "Dotted config key=value, applied to every target");
  run->add_option("--seed", seed, "Random seed for noise injection");
  run->add_option("--parallel", parallel, "Worker threads for independent scenarios")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& name : wsdrive::builtin_scenarios()) {
      const auto doc = wsdrive::builtin_document(name);
      std::cout << name << "  [" << doc.value("kind", "") << "]  " << doc.value("description", "") << '\n';
    }
    if (!*run) return 0;
  }
  if (!*run) {
    std::cout << app.help();
    return 0;
  }

  std::vector<wsdrive::ScenarioConfig> configs;
  try {
    for (const auto& t : targets) {
      auto doc = load_target(t);
      for (const auto& o : overrides) wsdrive::apply_override(doc, o);
      if (seed) doc["seed"] = *seed;
      configs.push_back(wsdrive::parse_scenario(doc));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    const auto results = wsdrive::run_scenarios(configs, out, parallel);
    for (const auto& r : results) {
      std::cout << r.scenario << ": " << r.files.size() + 1 << " files in " << r.directory.string() << '\n';
      for (const auto& w : r.warnings) std::cout << "  warning: " << w << '\n';
      for (const auto& [k, v] : r.summary.items()) std::cout << "  " << k << " = " << v.dump() << '\n';
    }
  } catch (const wsdrive::ScenarioFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const wsdrive::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
