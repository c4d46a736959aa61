#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coop/checks.hpp"
#include "coop/config_io.hpp"
#include "coop/criteria.hpp"
#include "coop/csv.hpp"
#include "coop/scenarios.hpp"
#include "coop/sim.hpp"

#ifndef COOP_VERSION
#define COOP_VERSION "unknown"
#endif

namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string config;
  std::string scenario = "se3_nominal";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> overrides;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::string out = "out/suite";
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
  f << text;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

coop::ScenarioConfig resolve(const RunOptions& o) {
  std::vector<std::string> overrides;
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  overrides.insert(overrides.end(), o.overrides.begin(), o.overrides.end());
  if (!o.config.empty()) return coop::load_scenario(o.config, overrides);
  return coop::parse_scenario(coop::Json{{"base", o.scenario}}.dump(), overrides);
}

/// Runs one config, writes CSV and manifest. Returns the manifest path.
fs::path run_and_write(const coop::ScenarioConfig& c, const fs::path& dir, bool& aborted) {
  fs::create_directories(dir);
  const std::string stem = c.name + "_seed" + std::to_string(c.seed);
  const fs::path csv = dir / (stem + ".csv");
  const fs::path manifest = dir / (stem + ".manifest.json");

  coop::Json m;
  m["config"] = coop::scenario_to_json(c);
  m["seed"] = c.seed;
  m["version"] = COOP_VERSION;
  const auto t0 = std::chrono::steady_clock::now();
  aborted = false;
  try {
    coop::write_csv(coop::run(c), csv.string());
    m["outputs"] = {csv.string(), manifest.string()};
  } catch (const coop::SimulationAbort& e) {
    aborted = true;
    m["abort"] = e.what();
    m["outputs"] = {manifest.string()};
    std::cerr << c.name << ": integrator abort: " << e.what() << "\n";
  }
  m["wall_seconds"] = seconds_since(t0);
  write_text(manifest, m.dump(2) + "\n");
  return manifest;
}

int cmd_run(const RunOptions& o) {
  coop::ScenarioConfig c;
  try {
    c = resolve(o);
  } catch (const coop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  bool aborted = false;
  const fs::path manifest = run_and_write(c, o.out, aborted);
  std::cout << "wrote " << manifest.string() << "\n";
  return aborted ? 3 : 0;
}

int cmd_config(const RunOptions& o) {
  try {
    std::cout << coop::dump_scenario(resolve(o));
  } catch (const coop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int cmd_paper_suite(const SuiteOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = o.out;
  bool any_abort = false;
  for (const auto& name : coop::scenario_names()) {
    bool aborted = false;
    run_and_write(coop::scenario_by_name(name, o.seed), dir, aborted);
    std::cout << name << (aborted ? ": ABORTED" : ": ok") << "\n";
    any_abort = any_abort || aborted;
  }

  std::string summary;
  bool all_pass = !any_abort;
  for (const auto& r : coop::evaluate_criteria()) {
    all_pass = all_pass && r.pass;
    summary += coop::verdict_line(r) + "\n";
    for (const auto& d : r.details) summary += "    " + d + "\n";
  }
  summary += coop::criteria_detail::fmt("suite wall time %.1f s\n", seconds_since(t0));
  write_text(dir / "summary.txt", summary);
  std::cout << summary;
  return all_pass ? 0 : 1;
}

int cmd_check() {
  bool all_pass = true;
  for (const auto& r : coop::run_checks()) {
    all_pass = all_pass && r.pass;
    std::printf("%s  %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative adaptive manipulation simulator"};
  app.set_version_flag("--version", std::string(COOP_VERSION));
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Simulate one scenario and write CSV plus manifest");
  run->add_option("--config", run_opts.config, "Config file (JSON)")->check(CLI::ExistingFile);
  run->add_option("--scenario", run_opts.scenario, "Canned scenario used when no config is given")
      ->check(CLI::IsMember(coop::scenario_names()));
  run->add_option("--seed", run_opts.seed, "Seed for the initial estimates");
  run->add_option("--out", run_opts.out, "Output directory");
  run->add_option("--override", run_opts.overrides, "Dotted KEY=VALUE applied to the config")
      ->allow_extra_args(false);

  RunOptions cfg_opts;
  auto* config = app.add_subcommand("config", "Print the fully resolved config as JSON");
  config->add_option("--config", cfg_opts.config, "Config file (JSON)")->check(CLI::ExistingFile);
  config->add_option("--scenario", cfg_opts.scenario, "Canned scenario used when no config is given")
      ->check(CLI::IsMember(coop::scenario_names()));
  config->add_option("--seed", cfg_opts.seed, "Seed for the initial estimates");
  config->add_option("--override", cfg_opts.overrides, "Dotted KEY=VALUE applied to the config")
      ->allow_extra_args(false);

  SuiteOptions suite_opts;
  auto* suite = app.add_subcommand("paper-suite", "Run all canned scenarios and the acceptance battery");
  suite->add_option("--seed", suite_opts.seed, "Seed for the written CSVs");
  suite->add_option("--out", suite_opts.out, "Output directory");

  auto* check = app.add_subcommand("check", "Run the fast invariant battery");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_opts);
    if (*config) return cmd_config(cfg_opts);
    if (*suite) return cmd_paper_suite(suite_opts);
    if (*check) return cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
