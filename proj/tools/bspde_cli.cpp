#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bspde/config.hpp"
#include "bspde/errors.hpp"
#include "bspde/experiments.hpp"
#include "bspde/records.hpp"

namespace {

struct Settings {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string format = "csv";
  bool dump_paths = false;
};

void print_result(const bspde::ExperimentResult& r) {
  std::printf("%s %-24s %-12s %8.2fs\n", r.passed() ? "PASS" : "FAIL", r.id.c_str(), r.kind.c_str(), r.wall_time_s);
  if (!r.error.empty()) std::printf("    error: %s\n", r.error.c_str());
  for (const auto& c : r.checks) {
    if (c.relation == bspde::Relation::Info || c.pass) continue;
    std::printf("    %s = %.6g, required %s %.6g\n", c.name.c_str(), c.value, bspde::relation_symbol(c.relation),
                c.threshold);
  }
}

int run(const std::string& command, const Settings& s) {
  std::vector<bspde::PreparedExperiment> prepared;
  try {
    const bspde::Config cfg = bspde::load_config(s.config);
    for (const auto& section : cfg.experiments) {
      bspde::PreparedExperiment p = bspde::prepare_experiment(section, s.seed);
      if (command == "check-all" || p.kind == command) prepared.push_back(std::move(p));
    }
  } catch (const bspde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (prepared.empty()) {
    std::cerr << "config error: " << s.config << " has no experiments of kind '" << command << "'\n";
    return 2;
  }

  std::error_code ec;
  std::filesystem::create_directories(s.out, ec);
  if (ec) {
    std::cerr << "cannot create output directory " << s.out << ": " << ec.message() << "\n";
    return 2;
  }

  bspde::RunOptions opts;
  opts.threads = s.threads;
  if (s.dump_paths) opts.dump_dir = s.out;

  std::vector<bspde::ExperimentResult> results;
  bool all_pass = true;
  for (const auto& p : prepared) {
    results.push_back(bspde::run_experiment(p, opts));
    print_result(results.back());
    all_pass = all_pass && results.back().passed();
  }

  const std::filesystem::path file = std::filesystem::path(s.out) / (s.format == "json" ? "results.json" : "results.csv");
  try {
    bspde::write_atomic(file.string(), s.format == "json" ? bspde::to_json(results) : bspde::to_csv(results));
  } catch (const std::exception& e) {
    std::cerr << "cannot write results: " << e.what() << "\n";
    return 2;
  }
  std::printf("%s: %zu experiment(s), results in %s\n", all_pass ? "all checks passed" : "some checks failed",
              results.size(), file.string().c_str());
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backward SPDE solver with non-local-in-time conditions: experiment runner"};
  app.require_subcommand(1);
  Settings settings;
  std::uint64_t seed = 0;

  std::vector<std::string> commands = bspde::experiment_kinds();
  commands.push_back("check-all");
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(
        name, name == "check-all" ? "run every experiment in the config" : "run the experiments of kind " + name);
    sub->add_option("--config", settings.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", settings.out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "replaces the seed key of every experiment");
    sub->add_option("--threads", settings.threads, "worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
    sub->add_option("--format", settings.format, "results format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    sub->add_flag("--dump-paths", settings.dump_paths, "write Monte Carlo paths to <out>/<id>.paths.bin");
  }

  CLI11_PARSE(app, argc, argv);
  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) settings.seed = seed;
  return run(chosen->get_name(), settings);
}
