// spi: command-line front end for the LQR solvers.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "spi/cli/commands.hpp"

namespace {

using nlohmann::json;
using namespace spi::cli;

struct Options {
  std::string config;
  std::string out = ".";
  std::string report;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> solver;
};

void setup_logging() {
  // Logs go to stderr so stdout stays clean for scripting.
  auto logger = spdlog::stderr_color_mt("spi");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("SPI_LOG")) spdlog::cfg::helpers::load_levels(level);
}

ExperimentConfig load(const Options& opts) {
  ExperimentConfig cfg = load_config(opts.config);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.has_seed = true;
  }
  if (opts.solver) cfg.solver.kind = parse_solver_kind(*opts.solver, "--solver");
  if (cfg.solver.kind == SolverKind::kSpiModelFree && !cfg.has_seed) {
    throw ConfigError("/seed", "required for spi-model-free (or pass --seed)");
  }
  return cfg;
}

int fail(const std::exception& e, const std::filesystem::path& out, bool write_error) {
  const json err = error_to_json(e);
  std::cerr << "error: " << e.what() << '\n';
  if (write_error) {
    try {
      write_file(out, "error.json", json{{"error", err}}.dump(2) + "\n");
    } catch (const std::exception& io) {
      std::cerr << "error: " << io.what() << '\n';
    }
  }
  return exit_code_for(e);
}

int cmd_solve(const Options& opts) {
  const ExperimentConfig cfg = load(opts);
  const SolveOutcome outcome = run_solve(cfg);
  write_file(opts.out, "report.json", outcome.report.dump(2) + "\n");
  write_file(opts.out, "iterations.csv", outcome.csv);
  write_file(opts.out, "timing.json",
             json{{"wall_time_s", outcome.wall_time_s}}.dump(2) + "\n");
  std::cout << "K = " << outcome.report["solution"]["K"].dump() << '\n';
  return kExitOk;
}

int cmd_discretize(const Options& opts) {
  const DiscretizeOutcome outcome = run_discretize(load(opts));
  write_file(opts.out, "discretized.json", outcome.document.dump(2) + "\n");
  return kExitOk;
}

int cmd_simulate(const Options& opts) {
  const SimulateOutcome outcome = run_simulate(load(opts));
  write_file(opts.out, "trajectory.csv", outcome.csv);
  if (outcome.diverged) {
    spdlog::error("trajectory diverged at step {}", outcome.divergence_step);
    write_file(opts.out, "error.json",
               json{{"error", {{"code", "DivergenceDetected"},
                               {"step", outcome.divergence_step}}}}
                       .dump(2) +
                   "\n");
    return kExitDivergence;
  }
  return kExitOk;
}

int cmd_compare(const Options& opts) {
  const CompareOutcome outcome = run_compare(load(opts));
  write_file(opts.out, "compare.csv", outcome.summary_csv);
  write_file(opts.out, "compare_trials.csv", outcome.trials_csv);
  std::cout << outcome.summary_csv;
  return kExitOk;
}

int cmd_plotdata(const Options& opts) {
  std::ifstream in(opts.report);
  if (!in) throw ConfigError("--report", "cannot open " + opts.report);
  json report;
  try {
    report = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--report", std::string("invalid JSON: ") + e.what());
  }
  const PlotData data = run_plotdata(report);
  write_file(opts.out, "p_error.dat", data.p_error);
  write_file(opts.out, "k_error.dat", data.k_error);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Discrete-time LQR by scaling policy iteration"};
  app.require_subcommand(1);
  Options opts;

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opts.config, "JSON experiment config");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "output directory")->capture_default_str();
    sub->add_option("--seed", opts.seed, "root seed (overrides the config)");
    sub->add_option("--solver", opts.solver, "spi-model-based | spi-model-free | hewer | vi");
  };
  auto* solve = app.add_subcommand("solve", "run a solver and write report.json/iterations.csv");
  add_common(solve, true);
  auto* discretize = app.add_subcommand("discretize", "zero-order-hold discretization");
  add_common(discretize, true);
  auto* simulate = app.add_subcommand("simulate", "simulate the plant under a fixed gain");
  add_common(simulate, true);
  auto* compare = app.add_subcommand("compare", "randomized solver comparison");
  add_common(compare, true);
  auto* plotdata = app.add_subcommand("plotdata", "convergence curves from a solve report");
  plotdata->add_option("--report", opts.report, "report.json from `solve`")->required();
  plotdata->add_option("--out", opts.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfigError;
  }

  // Solve failures leave a machine-readable error.json next to the outputs.
  const bool write_error = solve->parsed();
  try {
    if (solve->parsed()) return cmd_solve(opts);
    if (discretize->parsed()) return cmd_discretize(opts);
    if (simulate->parsed()) return cmd_simulate(opts);
    if (compare->parsed()) return cmd_compare(opts);
    if (plotdata->parsed()) return cmd_plotdata(opts);
  } catch (const std::exception& e) {
    return fail(e, opts.out, write_error);
  }
  return kExitOk;
}
