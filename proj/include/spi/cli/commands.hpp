#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spi/cli/config.hpp"

namespace spi::cli {

/// Process exit codes of the `spi` tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitSolverError = 3,
  kExitDivergence = 4,
};

/// Maps an exception thrown by a command to its exit code.
int exit_code_for(const std::exception& e);
/// {"code": ..., "message": ...} for a failure.
nlohmann::json error_to_json(const std::exception& e);

/// Formats a double with 17 significant digits ("%.17g").
std::string format_number(double v);

// ---------------------------------------------------------------- discretize

struct DiscretizeOutcome {
  LinearSystem system;
  nlohmann::json document;
};

/// Requires a continuous or power-system plant in the config.
DiscretizeOutcome run_discretize(const ExperimentConfig& config);

// --------------------------------------------------------------------- solve

struct SolveOutcome {
  nlohmann::json report;  // deterministic given config and seed
  std::string csv;        // per-iteration trace
  AreSolution solution;
  double wall_time_s = 0.0;  // solver iterations only
};

/// Collects the exploration trajectory used by the model-free solver.
Trajectory collect_data(const ExperimentConfig& config, const LinearSystem& sys,
                        const Eigen::Ref<const RealMatrix>& behavior_gain, std::uint64_t seed);

/// Runs the configured solver. Throws spi::Error on solver failure and
/// ConfigError when a required field (seed, x0) is missing.
SolveOutcome run_solve(const ExperimentConfig& config);

// ------------------------------------------------------------------- compare

struct TrialResult {
  int trial = 0;
  SolverKind solver = SolverKind::kSpiModelFree;
  bool converged = false;
  int iterations = 0;  // gain updates (+ b increments) until ‖K − K*‖ < gain_tol
  double wall_time_s = 0.0;
  std::string error;  // error code when the solver failed
};

struct SolverSummary {
  SolverKind solver = SolverKind::kSpiModelFree;
  int trials = 0;
  int failures = 0;
  double mean_iterations = 0.0;  // over converged trials
  double mean_wall_time_s = 0.0;
};

struct CompareOutcome {
  std::vector<TrialResult> trials;  // sorted by (trial, solver order)
  std::vector<SolverSummary> summary;
  std::string summary_csv;
  std::string trials_csv;
};

/// Random P0 = GᵀG + 1e-3·I, G_ij i.i.d. standard normal from `seed`.
SymMatrix random_p0(Eigen::Index n, std::uint64_t seed);

/// Seed of trial t: splitmix64(root + t).
std::uint64_t trial_seed(std::uint64_t root, int trial);

/// Runs every configured solver from K̃0 = (R + BᵀP0B)⁻¹BᵀP0A (VI starts at P0).
std::vector<TrialResult> compare_trial(const ExperimentConfig& config, const LinearSystem& sys,
                                       const CostWeights& weights, const SymMatrix& p0,
                                       const RealMatrix& k_star, std::uint64_t seed, int trial);

CompareOutcome run_compare(const ExperimentConfig& config);

// ------------------------------------------------------------------ simulate

struct SimulateOutcome {
  Trajectory trajectory;
  std::string csv;
  bool diverged = false;
  int divergence_step = -1;
};

SimulateOutcome run_simulate(const ExperimentConfig& config);

// ------------------------------------------------------------------ plotdata

struct PlotData {
  std::string p_error;  // "iteration ‖P̃_i − P*‖" lines
  std::string k_error;  // "iteration ‖K̃_i − K*‖" lines
};

/// Throws ConfigError when the report carries no oracle solution.
PlotData run_plotdata(const nlohmann::json& report);

/// Writes `content` to dir/name, creating dir.
void write_file(const std::filesystem::path& dir, const std::string& name,
                const std::string& content);

}  // namespace spi::cli
