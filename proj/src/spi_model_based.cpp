#include "spi/spi_model_based.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace spi {

void require_assumption(const LinearSystem& sys, const CostWeights& weights) {
  weights.require_compatible(sys);
  if (!is_controllable(sys)) {
    throw Error(ErrorCode::kInvalidArgument, "the pair (A, B) is not controllable");
  }
  if (!is_observable(sys.a(), psd_sqrt(weights.q()))) {
    throw Error(ErrorCode::kInvalidArgument, "the pair (A, sqrt(Q)) is not observable");
  }
}

double choose_b_model_based(const LinearSystem& sys, const Eigen::Ref<const RealMatrix>& k0,
                            double beta) {
  if (!(beta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be > 0");
  return spectral_radius(sys.closed_loop(k0)) + beta;
}

SymMatrix scaled_policy_evaluation(const LinearSystem& sys, const CostWeights& weights,
                                   const Eigen::Ref<const RealMatrix>& gain, double cum) {
  const RealMatrix scaled = cum * sys.closed_loop(gain);
  const SymMatrix w(weights.q().matrix() + gain.transpose() * weights.r().matrix() * gain);
  try {
    return solve_discrete_lyapunov(scaled, w);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnstableF) throw;
    throw Error(ErrorCode::kUnstableScaledSystem,
                std::string("scaled closed loop lost stability: ") + e.what());
  }
}

RealMatrix scaled_policy_improvement(const LinearSystem& sys, const CostWeights& weights,
                                     const SymMatrix& p, double cum) {
  if (!(cum > 0.0)) throw Error(ErrorCode::kInvalidArgument, "cumulative factor must be > 0");
  const RealMatrix& b = sys.b();
  const RealMatrix inner = b.transpose() * p.matrix() * b + weights.r().matrix() / (cum * cum);
  return solve_inner(inner, b.transpose() * p.matrix() * sys.a());
}

double interior_scaling(double bound, double lambda, double cum) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must lie in (0, 1)");
  }
  if (!std::isfinite(bound)) return std::max(2.0, 2.0 / cum);
  return 1.0 + lambda * (bound - 1.0);
}

double choose_c_model_based(const LinearSystem& sys, const Eigen::Ref<const RealMatrix>& next_gain,
                            double cum, double lambda) {
  const double rho = spectral_radius(cum * sys.closed_loop(next_gain));
  if (rho >= 1.0) {
    std::ostringstream os;
    os << "improved gain does not stabilize the scaled plant (spectral radius " << rho << ")";
    throw Error(ErrorCode::kInvariantViolated, os.str());
  }
  const double bound = rho > 0.0 ? 1.0 / rho : std::numeric_limits<double>::infinity();
  return interior_scaling(bound, lambda, cum);
}

SpiReport spi_model_based(const LinearSystem& sys, const CostWeights& weights,
                          const Eigen::Ref<const RealMatrix>& k0,
                          const ModelBasedOptions& options) {
  require_assumption(sys, weights);
  if (options.max_iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_iterations must be >= 1");
  }
  SpiReport report;
  report.b = choose_b_model_based(sys, k0, options.beta);

  RealMatrix gain = k0;
  double c = 1.0;
  double cum = 1.0 / report.b;
  int i = 0;
  double change = 0.0;
  while (cum < 1.0) {
    if (i >= options.max_iterations) {
      throw MaxIterExceeded(i, change,
                            "scaling phase did not reach a cumulative factor of 1 within " +
                                std::to_string(options.max_iterations) + " iterations");
    }
    SpiState state;
    state.i = i;
    state.b = report.b;
    state.c = c;
    state.cum = cum;
    state.gain = gain;
    state.p = scaled_policy_evaluation(sys, weights, gain, cum);
    state.next_gain = scaled_policy_improvement(sys, weights, state.p, cum);
    if (!report.phase1.empty()) {
      change = (state.p.matrix() - report.phase1.back().p.matrix()).norm();
      state.change = change;
    }
    c = choose_c_model_based(sys, state.next_gain, cum, options.lambda);
    gain = state.next_gain;
    cum *= c;
    report.phase1.push_back(std::move(state));
    ++i;
  }

  report.handoff_index = i;
  report.handoff_cum = cum;
  report.handoff_c = c;
  report.handoff_gain = gain;

  PiResult pi;
  try {
    pi = hewer_pi(sys, weights, gain, options.tol, options.max_iterations);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotStabilizing) throw;
    throw Error(ErrorCode::kInvariantViolated,
                std::string("handoff gain does not stabilize the plant: ") + e.what());
  }
  for (PiStep& step : pi.trace) step.i += report.handoff_index;
  report.phase2 = std::move(pi.trace);
  report.solution = std::move(pi.solution);
  report.solution.iterations += report.handoff_index;
  return report;
}

}  // namespace spi
