#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spi/lti.hpp"
#include "spi/spi_model_free.hpp"

namespace spi::cli {

/// Invalid configuration. `field` is a JSON-pointer-like path ("/solver/tol").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class SolverKind { kSpiModelBased, kSpiModelFree, kHewer, kValueIteration };

std::string_view to_string(SolverKind kind);
SolverKind parse_solver_kind(const std::string& name, const std::string& field = "/solver/name");

/// Parameters of the governor/turbine/generator load-frequency plant.
struct PowerSystemParams {
  double t_g = 0.08;
  double t_t = 0.1;
  double t_p = 20.0;
  double r_g = 2.5;
  double k_p = 120.0;
  double k_t = 1.0;
  double sample_time = 0.01;
};

/// Continuous matrices of the power-system plant. The input enters the
/// turbine-power equation through 1/T_g.
std::pair<RealMatrix, RealMatrix> power_system_continuous(const PowerSystemParams& params);

struct SystemSource {
  enum class Kind { kDiscrete, kContinuous, kPowerSystem } kind = Kind::kDiscrete;
  RealMatrix a;  // A or A_c
  RealMatrix b;  // B or B_c
  double sample_time = 0.0;
  PowerSystemParams power;
};

struct SolverConfig {
  SolverKind kind = SolverKind::kSpiModelBased;
  std::optional<RealMatrix> k0;  // zero gain when absent
  std::optional<RealMatrix> p0;  // value iteration start; zero when absent
  double beta = 1.0;
  double lambda = 0.5;
  double tol = 1e-5;
  int max_iterations = 100;
  double b_init = 1.0;
  double delta = 0.1;
  StepSchedule delta_schedule = StepSchedule::kConstant;
  int max_probes = 1000;
  double eps_inv = 1e-8;
  double eps_margin = 1e-6;
};

struct NoiseConfig {
  int num_terms = 100;
  double freq_low = -10.0;
  double freq_high = 10.0;
};

struct DataConfig {
  int samples = 30;
  std::optional<RealVector> x0;
  NoiseConfig noise;
};

struct SimulateConfig {
  int steps = 2000;
  int open_loop_steps = 0;
  std::optional<RealVector> x0;  // falls back to data.x0
  std::optional<RealMatrix> gain;
  std::optional<std::string> gain_report;  // path to a solve report
};

struct CompareConfig {
  int trials = 100;
  std::vector<SolverKind> solvers = {SolverKind::kSpiModelFree, SolverKind::kSpiModelBased,
                                     SolverKind::kValueIteration, SolverKind::kHewer};
  double gain_tol = 1e-4;
  double tol = 1e-10;
  double b_init = 1.0;
  double delta = 0.7;
  StepSchedule delta_schedule = StepSchedule::kLinear;
};

struct ExperimentConfig {
  SystemSource system;
  RealMatrix q;
  RealMatrix r;
  SolverConfig solver;
  DataConfig data;
  std::uint64_t seed = 0;
  bool has_seed = false;
  SimulateConfig simulate;
  CompareConfig compare;
};

/// Default initial state of the power-system experiment.
RealVector power_system_x0();

/// Parses and validates a configuration document.
ExperimentConfig parse_config(const nlohmann::json& doc);
/// Reads a file; JSON syntax errors are reported with line and column.
ExperimentConfig load_config(const std::string& path);

/// Canonical echo of a parsed configuration; parse_config(config_to_json(c))
/// reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// The discrete plant described by the configuration (discretizing if needed).
LinearSystem build_system(const ExperimentConfig& config);
CostWeights build_weights(const ExperimentConfig& config);
/// Initial state for data collection; throws ConfigError when none is given
/// and the plant is not the power-system preset.
RealVector data_x0(const ExperimentConfig& config);

nlohmann::json matrix_to_json(const Eigen::Ref<const RealMatrix>& m);
RealMatrix matrix_from_json(const nlohmann::json& j, const std::string& field);
RealVector vector_from_json(const nlohmann::json& j, const std::string& field);

}  // namespace spi::cli
