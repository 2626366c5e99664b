#include "spi/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace spi::cli {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  const std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!names.count(item.key())) throw ConfigError(path + "/" + item.key(), "unknown field");
  }
}

double get_number(const json& obj, const char* key, const std::string& path, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path + "/" + key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path + "/" + key, "must be finite");
  return d;
}

int get_int(const json& obj, const char* key, const std::string& path, int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + "/" + key, "expected an integer");
  return v.get<int>();
}

StepSchedule parse_schedule(const json& obj, const std::string& path, StepSchedule fallback) {
  if (!obj.contains("delta_schedule")) return fallback;
  const json& v = obj.at("delta_schedule");
  if (v == "constant") return StepSchedule::kConstant;
  if (v == "linear") return StepSchedule::kLinear;
  throw ConfigError(path + "/delta_schedule", "expected \"constant\" or \"linear\"");
}

std::string_view schedule_name(StepSchedule s) {
  return s == StepSchedule::kLinear ? "linear" : "constant";
}

json vector_to_json(const RealVector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

SystemSource parse_system(const json& obj) {
  const std::string path = "/system";
  check_keys(obj, path, {"discrete", "continuous", "power_system"});
  if (obj.size() != 1) {
    throw ConfigError(path, "exactly one of discrete, continuous, power_system is required");
  }
  SystemSource src;
  if (obj.contains("discrete")) {
    const json& d = obj.at("discrete");
    check_keys(d, path + "/discrete", {"A", "B"});
    src.kind = SystemSource::Kind::kDiscrete;
    src.a = matrix_from_json(d.value("A", json()), path + "/discrete/A");
    src.b = matrix_from_json(d.value("B", json()), path + "/discrete/B");
  } else if (obj.contains("continuous")) {
    const json& c = obj.at("continuous");
    const std::string cp = path + "/continuous";
    check_keys(c, cp, {"A", "B", "sample_time"});
    src.kind = SystemSource::Kind::kContinuous;
    src.a = matrix_from_json(c.value("A", json()), cp + "/A");
    src.b = matrix_from_json(c.value("B", json()), cp + "/B");
    require(c.contains("sample_time"), cp + "/sample_time", "required");
    src.sample_time = get_number(c, "sample_time", cp, 0.0);
    require(src.sample_time > 0.0, cp + "/sample_time", "must be > 0");
  } else {
    const json& p = obj.at("power_system");
    const std::string pp = path + "/power_system";
    check_keys(p, pp, {"T_g", "T_t", "T_p", "R_g", "K_p", "K_t", "sample_time"});
    src.kind = SystemSource::Kind::kPowerSystem;
    PowerSystemParams& ps = src.power;
    ps.t_g = get_number(p, "T_g", pp, ps.t_g);
    ps.t_t = get_number(p, "T_t", pp, ps.t_t);
    ps.t_p = get_number(p, "T_p", pp, ps.t_p);
    ps.r_g = get_number(p, "R_g", pp, ps.r_g);
    ps.k_p = get_number(p, "K_p", pp, ps.k_p);
    ps.k_t = get_number(p, "K_t", pp, ps.k_t);
    ps.sample_time = get_number(p, "sample_time", pp, ps.sample_time);
    require(ps.t_g > 0 && ps.t_t > 0 && ps.t_p > 0 && ps.r_g > 0, pp,
            "time constants and R_g must be > 0");
    require(ps.sample_time > 0.0, pp + "/sample_time", "must be > 0");
    std::tie(src.a, src.b) = power_system_continuous(ps);
    src.sample_time = ps.sample_time;
  }
  require(src.a.rows() == src.a.cols(), path, "A must be square");
  require(src.b.rows() == src.a.rows(), path, "B must have as many rows as A");
  return src;
}

SolverConfig parse_solver(const json& obj) {
  const std::string path = "/solver";
  check_keys(obj, path,
             {"name", "K0", "P0", "beta", "lambda", "tol", "max_iterations", "b_init", "delta",
              "delta_schedule", "max_probes", "eps_inv", "eps_margin"});
  SolverConfig s;
  if (obj.contains("name")) {
    if (!obj.at("name").is_string()) throw ConfigError(path + "/name", "expected a string");
    s.kind = parse_solver_kind(obj.at("name").get<std::string>());
  }
  if (obj.contains("K0")) s.k0 = matrix_from_json(obj.at("K0"), path + "/K0");
  if (obj.contains("P0")) s.p0 = matrix_from_json(obj.at("P0"), path + "/P0");
  s.beta = get_number(obj, "beta", path, s.beta);
  s.lambda = get_number(obj, "lambda", path, s.lambda);
  s.tol = get_number(obj, "tol", path, s.tol);
  s.max_iterations = get_int(obj, "max_iterations", path, s.max_iterations);
  s.b_init = get_number(obj, "b_init", path, s.b_init);
  s.delta = get_number(obj, "delta", path, s.delta);
  s.delta_schedule = parse_schedule(obj, path, s.delta_schedule);
  s.max_probes = get_int(obj, "max_probes", path, s.max_probes);
  s.eps_inv = get_number(obj, "eps_inv", path, s.eps_inv);
  s.eps_margin = get_number(obj, "eps_margin", path, s.eps_margin);

  require(s.beta > 0.0, path + "/beta", "must be > 0");
  require(s.lambda > 0.0 && s.lambda < 1.0, path + "/lambda", "must lie in (0, 1)");
  require(s.tol > 0.0, path + "/tol", "must be > 0");
  require(s.max_iterations >= 1, path + "/max_iterations", "must be >= 1");
  require(s.b_init >= 1.0, path + "/b_init", "must be >= 1");
  require(s.delta > 0.0, path + "/delta", "must be > 0");
  require(s.max_probes >= 0, path + "/max_probes", "must be >= 0");
  require(s.eps_inv > 0.0, path + "/eps_inv", "must be > 0");
  require(s.eps_margin >= 0.0, path + "/eps_margin", "must be >= 0");
  return s;
}

DataConfig parse_data(const json& obj) {
  const std::string path = "/data";
  check_keys(obj, path, {"samples", "x0", "noise"});
  DataConfig d;
  d.samples = get_int(obj, "samples", path, d.samples);
  require(d.samples >= 1, path + "/samples", "must be >= 1");
  if (obj.contains("x0")) d.x0 = vector_from_json(obj.at("x0"), path + "/x0");
  if (obj.contains("noise")) {
    const json& n = obj.at("noise");
    const std::string np = path + "/noise";
    check_keys(n, np, {"num_terms", "freq_low", "freq_high"});
    d.noise.num_terms = get_int(n, "num_terms", np, d.noise.num_terms);
    d.noise.freq_low = get_number(n, "freq_low", np, d.noise.freq_low);
    d.noise.freq_high = get_number(n, "freq_high", np, d.noise.freq_high);
    require(d.noise.num_terms >= 1, np + "/num_terms", "must be >= 1");
    require(d.noise.freq_low < d.noise.freq_high, np, "freq_low must be < freq_high");
  }
  return d;
}

SimulateConfig parse_simulate(const json& obj) {
  const std::string path = "/simulate";
  check_keys(obj, path, {"steps", "open_loop_steps", "x0", "gain", "gain_report"});
  SimulateConfig s;
  s.steps = get_int(obj, "steps", path, s.steps);
  s.open_loop_steps = get_int(obj, "open_loop_steps", path, s.open_loop_steps);
  require(s.steps >= 0, path + "/steps", "must be >= 0");
  require(s.open_loop_steps >= 0, path + "/open_loop_steps", "must be >= 0");
  if (obj.contains("x0")) s.x0 = vector_from_json(obj.at("x0"), path + "/x0");
  if (obj.contains("gain")) s.gain = matrix_from_json(obj.at("gain"), path + "/gain");
  if (obj.contains("gain_report")) {
    if (!obj.at("gain_report").is_string()) {
      throw ConfigError(path + "/gain_report", "expected a path string");
    }
    s.gain_report = obj.at("gain_report").get<std::string>();
  }
  require(!(s.gain && s.gain_report), path, "give at most one of gain, gain_report");
  return s;
}

CompareConfig parse_compare(const json& obj) {
  const std::string path = "/compare";
  check_keys(obj, path,
             {"trials", "solvers", "gain_tol", "tol", "b_init", "delta", "delta_schedule"});
  CompareConfig c;
  c.trials = get_int(obj, "trials", path, c.trials);
  require(c.trials >= 1, path + "/trials", "must be >= 1");
  if (obj.contains("solvers")) {
    const json& list = obj.at("solvers");
    if (!list.is_array() || list.empty()) {
      throw ConfigError(path + "/solvers", "expected a non-empty array of solver names");
    }
    c.solvers.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string field = path + "/solvers/" + std::to_string(i);
      if (!list[i].is_string()) throw ConfigError(field, "expected a string");
      c.solvers.push_back(parse_solver_kind(list[i].get<std::string>(), field));
    }
  }
  c.gain_tol = get_number(obj, "gain_tol", path, c.gain_tol);
  c.tol = get_number(obj, "tol", path, c.tol);
  c.b_init = get_number(obj, "b_init", path, c.b_init);
  c.delta = get_number(obj, "delta", path, c.delta);
  c.delta_schedule = parse_schedule(obj, path, c.delta_schedule);
  require(c.gain_tol > 0.0, path + "/gain_tol", "must be > 0");
  require(c.tol > 0.0, path + "/tol", "must be > 0");
  require(c.b_init >= 1.0, path + "/b_init", "must be >= 1");
  require(c.delta > 0.0, path + "/delta", "must be > 0");
  return c;
}

}  // namespace

std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::kSpiModelBased: return "spi-model-based";
    case SolverKind::kSpiModelFree: return "spi-model-free";
    case SolverKind::kHewer: return "hewer";
    case SolverKind::kValueIteration: return "vi";
  }
  return "unknown";
}

SolverKind parse_solver_kind(const std::string& name, const std::string& field) {
  if (name == "spi-model-based") return SolverKind::kSpiModelBased;
  if (name == "spi-model-free") return SolverKind::kSpiModelFree;
  if (name == "hewer") return SolverKind::kHewer;
  if (name == "vi") return SolverKind::kValueIteration;
  throw ConfigError(field, "unknown solver \"" + name +
                               "\" (expected spi-model-based, spi-model-free, hewer or vi)");
}

std::pair<RealMatrix, RealMatrix> power_system_continuous(const PowerSystemParams& p) {
  RealMatrix a(3, 3);
  a << -1.0 / p.t_g, 0.0, 1.0 / (p.r_g * p.t_g),
       p.k_t / p.t_t, -1.0 / p.t_t, 0.0,
       0.0, p.k_p / p.t_p, -1.0 / p.t_p;
  RealMatrix b(3, 1);
  b << 0.0, 1.0 / p.t_g, 0.0;
  return {a, b};
}

RealVector power_system_x0() { return (RealVector(3) << 0.1, 0.1, 0.2).finished(); }

nlohmann::json matrix_to_json(const Eigen::Ref<const RealMatrix>& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

RealMatrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a non-empty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw ConfigError(field + "/0", "expected a non-empty row");
  const std::size_t cols = j[0].size();
  RealMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string row_field = field + "/" + std::to_string(i);
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ConfigError(row_field, "expected a row of " + std::to_string(cols) + " numbers");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) {
        throw ConfigError(row_field + "/" + std::to_string(k), "expected a number");
      }
      const double v = j[i][k].get<double>();
      if (!std::isfinite(v)) throw ConfigError(row_field + "/" + std::to_string(k), "not finite");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return m;
}

RealVector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a non-empty array");
  RealVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(field + "/" + std::to_string(i), "expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

ExperimentConfig parse_config(const json& doc) {
  check_keys(doc, "", {"system", "weights", "solver", "data", "seed", "simulate", "compare"});
  ExperimentConfig cfg;
  if (!doc.contains("system")) throw ConfigError("/system", "required");
  cfg.system = parse_system(doc.at("system"));
  const Eigen::Index n = cfg.system.a.rows();
  const Eigen::Index m = cfg.system.b.cols();

  if (!doc.contains("weights")) throw ConfigError("/weights", "required");
  const json& w = doc.at("weights");
  check_keys(w, "/weights", {"Q", "R"});
  cfg.q = matrix_from_json(w.value("Q", json()), "/weights/Q");
  cfg.r = matrix_from_json(w.value("R", json()), "/weights/R");
  require(cfg.q.rows() == n && cfg.q.cols() == n, "/weights/Q",
          "must be " + std::to_string(n) + "x" + std::to_string(n));
  require(cfg.r.rows() == m && cfg.r.cols() == m, "/weights/R",
          "must be " + std::to_string(m) + "x" + std::to_string(m));

  if (doc.contains("solver")) cfg.solver = parse_solver(doc.at("solver"));
  if (cfg.solver.k0) {
    require(cfg.solver.k0->rows() == m && cfg.solver.k0->cols() == n, "/solver/K0",
            "must be " + std::to_string(m) + "x" + std::to_string(n));
  }
  if (cfg.solver.p0) {
    require(cfg.solver.p0->rows() == n && cfg.solver.p0->cols() == n, "/solver/P0",
            "must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (doc.contains("data")) cfg.data = parse_data(doc.at("data"));
  if (cfg.data.x0) require(cfg.data.x0->size() == n, "/data/x0", "wrong dimension");
  if (doc.contains("seed")) {
    const json& s = doc.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() &&
                                   s.get<std::int64_t>() < 0)) {
      throw ConfigError("/seed", "expected a non-negative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
    cfg.has_seed = true;
  }
  if (doc.contains("simulate")) cfg.simulate = parse_simulate(doc.at("simulate"));
  if (cfg.simulate.x0) require(cfg.simulate.x0->size() == n, "/simulate/x0", "wrong dimension");
  if (cfg.simulate.gain) {
    require(cfg.simulate.gain->rows() == m && cfg.simulate.gain->cols() == n, "/simulate/gain",
            "must be " + std::to_string(m) + "x" + std::to_string(n));
  }
  if (doc.contains("compare")) cfg.compare = parse_compare(doc.at("compare"));

  // Weight definiteness and the plant itself are checked by the library types.
  try {
    build_weights(cfg);
  } catch (const Error& e) {
    throw ConfigError("/weights", e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line/column.
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream os;
    os << path << ":" << line << ":" << column << ": invalid JSON (" << e.what() << ")";
    throw ConfigError("", os.str());
  }
  return parse_config(doc);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json doc;
  switch (c.system.kind) {
    case SystemSource::Kind::kDiscrete:
      doc["system"]["discrete"] = {{"A", matrix_to_json(c.system.a)},
                                   {"B", matrix_to_json(c.system.b)}};
      break;
    case SystemSource::Kind::kContinuous:
      doc["system"]["continuous"] = {{"A", matrix_to_json(c.system.a)},
                                     {"B", matrix_to_json(c.system.b)},
                                     {"sample_time", c.system.sample_time}};
      break;
    case SystemSource::Kind::kPowerSystem: {
      const PowerSystemParams& p = c.system.power;
      doc["system"]["power_system"] = {{"T_g", p.t_g}, {"T_t", p.t_t}, {"T_p", p.t_p},
                                       {"R_g", p.r_g}, {"K_p", p.k_p}, {"K_t", p.k_t},
                                       {"sample_time", p.sample_time}};
      break;
    }
  }
  doc["weights"] = {{"Q", matrix_to_json(c.q)}, {"R", matrix_to_json(c.r)}};

  const SolverConfig& s = c.solver;
  json solver = {{"name", to_string(s.kind)},
                 {"beta", s.beta},
                 {"lambda", s.lambda},
                 {"tol", s.tol},
                 {"max_iterations", s.max_iterations},
                 {"b_init", s.b_init},
                 {"delta", s.delta},
                 {"delta_schedule", schedule_name(s.delta_schedule)},
                 {"max_probes", s.max_probes},
                 {"eps_inv", s.eps_inv},
                 {"eps_margin", s.eps_margin}};
  if (s.k0) solver["K0"] = matrix_to_json(*s.k0);
  if (s.p0) solver["P0"] = matrix_to_json(*s.p0);
  doc["solver"] = std::move(solver);

  json data = {{"samples", c.data.samples},
               {"noise",
                {{"num_terms", c.data.noise.num_terms},
                 {"freq_low", c.data.noise.freq_low},
                 {"freq_high", c.data.noise.freq_high}}}};
  if (c.data.x0) data["x0"] = vector_to_json(*c.data.x0);
  doc["data"] = std::move(data);
  if (c.has_seed) doc["seed"] = c.seed;

  json sim = {{"steps", c.simulate.steps}, {"open_loop_steps", c.simulate.open_loop_steps}};
  if (c.simulate.x0) sim["x0"] = vector_to_json(*c.simulate.x0);
  if (c.simulate.gain) sim["gain"] = matrix_to_json(*c.simulate.gain);
  if (c.simulate.gain_report) sim["gain_report"] = *c.simulate.gain_report;
  doc["simulate"] = std::move(sim);

  json solvers = json::array();
  for (SolverKind k : c.compare.solvers) solvers.push_back(to_string(k));
  doc["compare"] = {{"trials", c.compare.trials},
                    {"solvers", std::move(solvers)},
                    {"gain_tol", c.compare.gain_tol},
                    {"tol", c.compare.tol},
                    {"b_init", c.compare.b_init},
                    {"delta", c.compare.delta},
                    {"delta_schedule", schedule_name(c.compare.delta_schedule)}};
  return doc;
}

LinearSystem build_system(const ExperimentConfig& config) {
  const SystemSource& src = config.system;
  if (src.kind == SystemSource::Kind::kDiscrete) return LinearSystem(src.a, src.b);
  return zoh_discretize(src.a, src.b, src.sample_time);
}

CostWeights build_weights(const ExperimentConfig& config) {
  // SymMatrix would silently symmetrize; a lopsided weight is a typo.
  const auto check = [](const RealMatrix& m, const char* field) {
    if (m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() >
                                    1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) {
      throw ConfigError(field, "must be symmetric");
    }
  };
  check(config.q, "/weights/Q");
  check(config.r, "/weights/R");
  return CostWeights(SymMatrix(config.q), SymMatrix(config.r));
}

RealVector data_x0(const ExperimentConfig& config) {
  if (config.data.x0) return *config.data.x0;
  if (config.system.kind == SystemSource::Kind::kPowerSystem) return power_system_x0();
  throw ConfigError("/data/x0", "required for data collection on a general plant");
}

}  // namespace spi::cli
