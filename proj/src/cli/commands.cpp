#include "spi/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

namespace spi::cli {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Box-Muller on uniform_unit draws; avoids the implementation-defined
// std::normal_distribution so P0 samples match across standard libraries.
double standard_normal(std::mt19937_64& engine) {
  const double u1 = 1.0 - uniform_unit(engine());  // (0, 1]
  const double u2 = uniform_unit(engine());
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RealMatrix initial_gain(const ExperimentConfig& config, const LinearSystem& sys) {
  if (config.solver.k0) return *config.solver.k0;
  return RealMatrix::Zero(sys.inputs(), sys.states());
}

std::uint64_t require_seed(const ExperimentConfig& config) {
  if (!config.has_seed) throw ConfigError("/seed", "required (or pass --seed)");
  return config.seed;
}

// One row of the iteration trace.
struct TraceRow {
  int i = 0;
  std::string phase;
  std::optional<double> b;
  std::optional<double> cum;
  std::optional<double> c;
  SymMatrix p;
  RealMatrix gain;
  RealMatrix next_gain;
  double change = 0.0;
  std::optional<double> c_bound;
  std::optional<double> q_min_singular;
  std::optional<ScalingBranch> branch;
};

std::string_view branch_name(ScalingBranch b) {
  switch (b) {
    case ScalingBranch::kInterior: return "interior";
    case ScalingBranch::kNonInvertible: return "non_invertible";
    case ScalingBranch::kBoundFallback: return "bound_fallback";
  }
  return "";
}

std::vector<TraceRow> rows_from_spi(const SpiReport& report) {
  std::vector<TraceRow> rows;
  for (const SpiState& s : report.phase1) {
    TraceRow r;
    r.i = s.i;
    r.phase = "scaling";
    r.b = s.b;
    r.cum = s.cum;
    r.c = s.c;
    r.p = s.p;
    r.gain = s.gain;
    r.next_gain = s.next_gain;
    r.change = s.change;
    r.c_bound = s.c_bound;
    r.q_min_singular = s.q_min_singular;
    r.branch = s.branch;
    rows.push_back(std::move(r));
  }
  for (const PiStep& s : report.phase2) {
    TraceRow r;
    r.i = s.i;
    r.phase = "policy_iteration";
    r.cum = 1.0;
    r.p = s.p;
    r.gain = s.gain;
    r.next_gain = s.next_gain;
    r.change = s.change;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<TraceRow> rows_from_pi(const std::vector<PiStep>& trace) {
  std::vector<TraceRow> rows;
  for (const PiStep& s : trace) {
    TraceRow r;
    r.i = s.i;
    r.phase = "policy_iteration";
    r.p = s.p;
    r.gain = s.gain;
    r.next_gain = s.next_gain;
    r.change = s.change;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<TraceRow> rows_from_vi(const LinearSystem& sys, const CostWeights& weights,
                                   const SymMatrix& p0, const std::vector<SymMatrix>& trace) {
  std::vector<TraceRow> rows;
  const SymMatrix* prev = &p0;
  RealMatrix gain = optimal_gain(sys, weights, p0);
  for (std::size_t k = 0; k < trace.size(); ++k) {
    TraceRow r;
    r.i = static_cast<int>(k) + 1;
    r.phase = "value_iteration";
    r.p = trace[k];
    r.gain = gain;
    r.next_gain = optimal_gain(sys, weights, trace[k]);
    r.change = (trace[k].matrix() - prev->matrix()).norm();
    gain = r.next_gain;
    prev = &trace[k];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string optional_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

// ρ-diagnostics need the plant; available in the CLI because the config
// carries it even when the solver itself never sees it.
struct RowDiagnostics {
  double rho_closed_loop;
  double rho_scaled;
  double rho_inv_next;
};

RowDiagnostics diagnose(const LinearSystem& sys, const TraceRow& r) {
  const double scale = r.cum.value_or(1.0);
  RowDiagnostics d;
  d.rho_closed_loop = spectral_radius(sys.closed_loop(r.gain));
  d.rho_scaled = scale * d.rho_closed_loop;
  const double next = scale * spectral_radius(sys.closed_loop(r.next_gain));
  d.rho_inv_next = next > 0.0 ? 1.0 / next : std::numeric_limits<double>::infinity();
  return d;
}

std::string rows_to_csv(const LinearSystem& sys, const std::vector<TraceRow>& rows) {
  std::ostringstream os;
  os << "i,phase,b,cum,c,p_norm,p_change,rho_closed_loop,rho_scaled,rho_inv_next,c_bound,"
        "q_min_singular,branch\r\n";
  for (const TraceRow& r : rows) {
    const RowDiagnostics d = diagnose(sys, r);
    os << r.i << ',' << r.phase << ',' << optional_number(r.b) << ',' << optional_number(r.cum)
       << ',' << optional_number(r.c) << ',' << format_number(r.p.matrix().norm()) << ','
       << format_number(r.change) << ',' << format_number(d.rho_closed_loop) << ','
       << format_number(d.rho_scaled) << ',' << format_number(d.rho_inv_next) << ','
       << optional_number(r.c_bound) << ',' << optional_number(r.q_min_singular) << ','
       << (r.branch ? branch_name(*r.branch) : "") << "\r\n";
  }
  return os.str();
}

json rows_to_json(const LinearSystem& sys, const std::vector<TraceRow>& rows) {
  json out = json::array();
  for (const TraceRow& r : rows) {
    const RowDiagnostics d = diagnose(sys, r);
    json row = {{"i", r.i},
                {"phase", r.phase},
                {"p_norm", r.p.matrix().norm()},
                {"p_change", r.change},
                {"rho_closed_loop", d.rho_closed_loop},
                {"rho_scaled", d.rho_scaled},
                {"P", matrix_to_json(r.p.matrix())},
                {"K", matrix_to_json(r.gain)},
                {"K_next", matrix_to_json(r.next_gain)}};
    if (std::isfinite(d.rho_inv_next)) row["rho_inv_next"] = d.rho_inv_next;
    if (r.b) row["b"] = *r.b;
    if (r.cum) row["cum"] = *r.cum;
    if (r.c) row["c"] = *r.c;
    if (r.c_bound) row["c_bound"] = *r.c_bound;
    if (r.q_min_singular) row["q_min_singular"] = *r.q_min_singular;
    if (r.branch) row["branch"] = branch_name(*r.branch);
    out.push_back(std::move(row));
  }
  return out;
}

ModelBasedOptions model_based_options(const SolverConfig& s) {
  ModelBasedOptions o;
  o.beta = s.beta;
  o.lambda = s.lambda;
  o.tol = s.tol;
  o.max_iterations = s.max_iterations;
  return o;
}

ModelFreeOptions model_free_options(const SolverConfig& s) {
  ModelFreeOptions o;
  o.search.b_init = s.b_init;
  o.search.delta = s.delta;
  o.search.schedule = s.delta_schedule;
  o.search.max_probes = s.max_probes;
  o.scaling.lambda = s.lambda;
  o.scaling.eps_inv = s.eps_inv;
  o.scaling.eps_margin = s.eps_margin;
  o.tol = s.tol;
  o.max_iterations = s.max_iterations;
  return o;
}

std::vector<RealMatrix> gain_sequence(const SpiReport& report, const RealMatrix& k0) {
  std::vector<RealMatrix> gains{k0};
  for (const SpiState& s : report.phase1) gains.push_back(s.next_gain);
  for (const PiStep& s : report.phase2) gains.push_back(s.next_gain);
  return gains;
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kExitConfigError;
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return err->code() == ErrorCode::kDivergenceDetected ? kExitDivergence : kExitSolverError;
  }
  return kExitSolverError;
}

json error_to_json(const std::exception& e) {
  json out;
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    out = {{"code", "ConfigError"}, {"field", c->field()}, {"message", e.what()}};
  } else if (const auto* err = dynamic_cast<const Error*>(&e)) {
    out = {{"code", to_string(err->code())}, {"message", e.what()}};
  } else {
    out = {{"code", "InternalError"}, {"message", e.what()}};
  }
  return out;
}

void write_file(const std::filesystem::path& dir, const std::string& name,
                const std::string& content) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

DiscretizeOutcome run_discretize(const ExperimentConfig& config) {
  if (config.system.kind == SystemSource::Kind::kDiscrete) {
    throw ConfigError("/system", "discretize needs a continuous or power_system plant");
  }
  LinearSystem sys = build_system(config);
  json doc = {{"system", {{"discrete", {{"A", matrix_to_json(sys.a())},
                                        {"B", matrix_to_json(sys.b())}}}}},
              {"sample_time", config.system.sample_time}};
  return {std::move(sys), std::move(doc)};
}

Trajectory collect_data(const ExperimentConfig& config, const LinearSystem& sys,
                        const Eigen::Ref<const RealMatrix>& behavior_gain, std::uint64_t seed) {
  const NoiseConfig& noise = config.data.noise;
  const ExplorationInput exploration(sys.inputs(), noise.num_terms, noise.freq_low,
                                     noise.freq_high, seed);
  const RealMatrix gain = behavior_gain;
  const InputSource source = [gain, exploration](int k, const RealVector& x) {
    return RealVector(-gain * x + exploration.at(k));
  };
  return simulate(sys, data_x0(config), source, config.data.samples);
}

SolveOutcome run_solve(const ExperimentConfig& config) {
  const LinearSystem sys = build_system(config);
  const CostWeights weights = build_weights(config);
  const RealMatrix k0 = initial_gain(config, sys);
  const SolverConfig& s = config.solver;

  json report;
  report["config"] = config_to_json(config);
  report["solver"] = to_string(s.kind);
  report["system"] = {{"A", matrix_to_json(sys.a())}, {"B", matrix_to_json(sys.b())}};

  SolveOutcome outcome;
  std::vector<TraceRow> rows;
  switch (s.kind) {
    case SolverKind::kSpiModelBased: {
      const auto start = Clock::now();
      const SpiReport rep = spi_model_based(sys, weights, k0, model_based_options(s));
      outcome.wall_time_s = seconds_since(start);
      rows = rows_from_spi(rep);
      outcome.solution = rep.solution;
      report["b"] = rep.b;
      report["handoff_index"] = rep.handoff_index;
      report["handoff_cum"] = rep.handoff_cum;
      report["handoff_gain"] = matrix_to_json(rep.handoff_gain);
      break;
    }
    case SolverKind::kSpiModelFree: {
      const std::uint64_t seed = require_seed(config);
      const Trajectory traj = collect_data(config, sys, k0, seed);
      const RegressionData data = build_regression_data(traj);
      const auto start = Clock::now();
      const SpiReport rep = spi_model_free(data, k0, weights, model_free_options(s));
      outcome.wall_time_s = seconds_since(start);
      rows = rows_from_spi(rep);
      outcome.solution = rep.solution;
      report["b"] = rep.b;
      report["b_increments"] = rep.b_probes;
      report["handoff_index"] = rep.handoff_index;
      report["handoff_cum"] = rep.handoff_cum;
      report["handoff_gain"] = matrix_to_json(rep.handoff_gain);
      report["bound_fallbacks"] = rep.bound_fallbacks;
      report["samples"] = static_cast<int>(traj.transitions());
      break;
    }
    case SolverKind::kHewer: {
      const auto start = Clock::now();
      const PiResult pi = hewer_pi(sys, weights, k0, s.tol, s.max_iterations);
      outcome.wall_time_s = seconds_since(start);
      rows = rows_from_pi(pi.trace);
      outcome.solution = pi.solution;
      break;
    }
    case SolverKind::kValueIteration: {
      const SymMatrix p0 = s.p0 ? SymMatrix(*s.p0) : SymMatrix::zero(sys.states());
      const auto start = Clock::now();
      const ViResult vi = value_iteration(sys, weights, p0, s.tol,
                                          std::max(s.max_iterations, kDefaultViMaxIter), true);
      outcome.wall_time_s = seconds_since(start);
      rows = rows_from_vi(sys, weights, p0, vi.trace);
      outcome.solution = vi.solution;
      break;
    }
  }

  report["iterations"] = rows_to_json(sys, rows);
  const AreSolution& sol = outcome.solution;
  report["solution"] = {{"P", matrix_to_json(sol.p.matrix())},
                        {"K", matrix_to_json(sol.k)},
                        {"residual", sol.residual},
                        {"are_residual", are_residual(sys, weights, sol.p)},
                        {"iterations", sol.iterations},
                        {"rho_closed_loop", spectral_radius(sys.closed_loop(sol.k))}};
  try {
    const AreSolution oracle = riccati_oracle(sys, weights);
    report["oracle"] = {{"P", matrix_to_json(oracle.p.matrix())},
                        {"K", matrix_to_json(oracle.k)},
                        {"iterations", oracle.iterations}};
  } catch (const Error& e) {
    spdlog::warn("reference value iteration failed: {}", e.what());
  }
  outcome.csv = rows_to_csv(sys, rows);
  outcome.report = std::move(report);
  spdlog::info("{} finished after {} iterations", to_string(s.kind), sol.iterations);
  return outcome;
}

SymMatrix random_p0(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  RealMatrix g(n, n);
  // Row-major fill order.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = standard_normal(engine);
  }
  return SymMatrix(g.transpose() * g + 1e-3 * RealMatrix::Identity(n, n));
}

std::uint64_t trial_seed(std::uint64_t root, int trial) {
  return splitmix64(root + static_cast<std::uint64_t>(trial));
}

std::vector<TrialResult> compare_trial(const ExperimentConfig& config, const LinearSystem& sys,
                                       const CostWeights& weights, const SymMatrix& p0,
                                       const RealMatrix& k_star, std::uint64_t seed, int trial) {
  const CompareConfig& cmp = config.compare;
  const RealMatrix k0 = optimal_gain(sys, weights, p0);
  const int max_iterations = std::max(config.solver.max_iterations, 500);

  std::vector<TrialResult> results;
  for (SolverKind kind : cmp.solvers) {
    TrialResult r;
    r.trial = trial;
    r.solver = kind;
    try {
      std::vector<RealMatrix> gains;
      int extra = 0;
      switch (kind) {
        case SolverKind::kSpiModelBased: {
          ModelBasedOptions o = model_based_options(config.solver);
          o.tol = cmp.tol;
          o.max_iterations = max_iterations;
          const auto start = Clock::now();
          const SpiReport rep = spi_model_based(sys, weights, k0, o);
          r.wall_time_s = seconds_since(start);
          gains = gain_sequence(rep, k0);
          break;
        }
        case SolverKind::kSpiModelFree: {
          const RegressionData data = build_regression_data(collect_data(config, sys, k0, seed));
          ModelFreeOptions o = model_free_options(config.solver);
          o.search.b_init = cmp.b_init;
          o.search.delta = cmp.delta;
          o.search.schedule = cmp.delta_schedule;
          o.tol = cmp.tol;
          o.max_iterations = max_iterations;
          const auto start = Clock::now();
          const SpiReport rep = spi_model_free(data, k0, weights, o);
          r.wall_time_s = seconds_since(start);
          gains = gain_sequence(rep, k0);
          extra = rep.b_probes;
          break;
        }
        case SolverKind::kHewer: {
          const auto start = Clock::now();
          const PiResult pi = hewer_pi(sys, weights, k0, cmp.tol, max_iterations);
          r.wall_time_s = seconds_since(start);
          gains.push_back(k0);
          for (const PiStep& s : pi.trace) gains.push_back(s.next_gain);
          break;
        }
        case SolverKind::kValueIteration: {
          const auto start = Clock::now();
          const ViResult vi = value_iteration(sys, weights, p0, cmp.tol, kDefaultViMaxIter, true);
          r.wall_time_s = seconds_since(start);
          gains.push_back(k0);
          for (const SymMatrix& p : vi.trace) gains.push_back(optimal_gain(sys, weights, p));
          break;
        }
      }
      const auto hit = std::find_if(gains.begin(), gains.end(), [&](const RealMatrix& k) {
        return (k - k_star).norm() < cmp.gain_tol;
      });
      if (hit == gains.end()) {
        r.error = "NotConverged";
      } else {
        r.converged = true;
        r.iterations = static_cast<int>(hit - gains.begin()) + extra;
      }
    } catch (const Error& e) {
      r.error = std::string(to_string(e.code()));
    }
    results.push_back(std::move(r));
  }
  return results;
}

CompareOutcome run_compare(const ExperimentConfig& config) {
  const std::uint64_t root = require_seed(config);
  const LinearSystem sys = build_system(config);
  const CostWeights weights = build_weights(config);
  const AreSolution oracle = riccati_oracle(sys, weights);

  CompareOutcome outcome;
  for (int t = 0; t < config.compare.trials; ++t) {
    const std::uint64_t seed = trial_seed(root, t);
    const SymMatrix p0 = random_p0(sys.states(), seed);
    std::vector<TrialResult> rs = compare_trial(config, sys, weights, p0, oracle.k, seed, t);
    outcome.trials.insert(outcome.trials.end(), rs.begin(), rs.end());
  }

  std::ostringstream trials_csv;
  trials_csv << "trial,solver,status,iterations,wall_time_s\r\n";
  for (const TrialResult& r : outcome.trials) {
    trials_csv << r.trial << ',' << to_string(r.solver) << ','
               << (r.converged ? std::string("ok") : r.error) << ','
               << (r.converged ? std::to_string(r.iterations) : std::string()) << ','
               << format_number(r.wall_time_s) << "\r\n";
  }
  outcome.trials_csv = trials_csv.str();

  std::ostringstream summary_csv;
  summary_csv << "solver,trials,failures,mean_iterations,mean_wall_time_s\r\n";
  for (SolverKind kind : config.compare.solvers) {
    SolverSummary s;
    s.solver = kind;
    double iter_sum = 0.0;
    double time_sum = 0.0;
    for (const TrialResult& r : outcome.trials) {
      if (r.solver != kind) continue;
      ++s.trials;
      if (!r.converged) {
        ++s.failures;
        continue;
      }
      iter_sum += r.iterations;
      time_sum += r.wall_time_s;
    }
    const int ok = s.trials - s.failures;
    s.mean_iterations = ok > 0 ? iter_sum / ok : std::numeric_limits<double>::quiet_NaN();
    s.mean_wall_time_s = ok > 0 ? time_sum / ok : std::numeric_limits<double>::quiet_NaN();
    summary_csv << to_string(kind) << ',' << s.trials << ',' << s.failures << ','
                << format_number(s.mean_iterations) << ',' << format_number(s.mean_wall_time_s)
                << "\r\n";
    outcome.summary.push_back(s);
  }
  outcome.summary_csv = summary_csv.str();
  return outcome;
}

SimulateOutcome run_simulate(const ExperimentConfig& config) {
  const LinearSystem sys = build_system(config);
  const SimulateConfig& sim = config.simulate;

  RealMatrix gain = RealMatrix::Zero(sys.inputs(), sys.states());
  if (sim.gain) {
    gain = *sim.gain;
  } else if (sim.gain_report) {
    std::ifstream in(*sim.gain_report);
    if (!in) throw ConfigError("/simulate/gain_report", "cannot open " + *sim.gain_report);
    json report;
    try {
      report = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("/simulate/gain_report", std::string("invalid JSON: ") + e.what());
    }
    if (!report.contains("solution") || !report["solution"].contains("K")) {
      throw ConfigError("/simulate/gain_report", "report has no solution/K");
    }
    gain = matrix_from_json(report["solution"]["K"], "/simulate/gain_report#solution/K");
    if (gain.rows() != sys.inputs() || gain.cols() != sys.states()) {
      throw ConfigError("/simulate/gain_report", "gain dimensions do not match the plant");
    }
  }
  RealVector x0;
  if (sim.x0) {
    x0 = *sim.x0;
  } else {
    try {
      x0 = data_x0(config);
    } catch (const ConfigError&) {
      throw ConfigError("/simulate/x0", "required (or set /data/x0)");
    }
  }

  SimulateOutcome outcome;
  try {
    outcome.trajectory = simulate(sys, x0, delayed_feedback(gain, sim.open_loop_steps), sim.steps);
  } catch (const DivergenceDetected& e) {
    outcome.trajectory = e.partial();
    outcome.diverged = true;
    outcome.divergence_step = e.step();
  }

  std::ostringstream os;
  os << 'k';
  for (Eigen::Index j = 0; j < sys.states(); ++j) os << ",x" << j + 1;
  for (Eigen::Index j = 0; j < sys.inputs(); ++j) os << ",u" << j + 1;
  os << "\r\n";
  const Trajectory& traj = outcome.trajectory;
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << k;
    for (Eigen::Index j = 0; j < sys.states(); ++j) os << ',' << format_number(traj.states[k](j));
    for (Eigen::Index j = 0; j < sys.inputs(); ++j) {
      os << ',';
      if (k < traj.inputs.size()) os << format_number(traj.inputs[k](j));
    }
    os << "\r\n";
  }
  outcome.csv = os.str();
  return outcome;
}

PlotData run_plotdata(const json& report) {
  if (!report.contains("oracle")) {
    throw ConfigError("/oracle", "report carries no reference solution");
  }
  const RealMatrix p_star = matrix_from_json(report["oracle"]["P"], "/oracle/P");
  const RealMatrix k_star = matrix_from_json(report["oracle"]["K"], "/oracle/K");
  PlotData out;
  if (!report.contains("iterations")) return out;
  std::ostringstream p_os;
  std::ostringstream k_os;
  const json& rows = report["iterations"];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string field = "/iterations/" + std::to_string(r);
    const int i = rows[r].at("i").get<int>();
    const RealMatrix p = matrix_from_json(rows[r].at("P"), field + "/P");
    const RealMatrix k = matrix_from_json(rows[r].at("K"), field + "/K");
    if (p.rows() != p_star.rows() || p.cols() != p_star.cols() || k.rows() != k_star.rows() ||
        k.cols() != k_star.cols()) {
      throw ConfigError(field, "matrix dimensions do not match the reference solution");
    }
    p_os << i << ' ' << format_number((p - p_star).norm()) << '\n';
    k_os << i << ' ' << format_number((k - k_star).norm()) << '\n';
  }
  out.p_error = p_os.str();
  out.k_error = k_os.str();
  return out;
}

}  // namespace spi::cli
