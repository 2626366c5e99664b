#include "spi/riccati.hpp"

#include <sstream>

namespace spi {

RealMatrix solve_inner(const Eigen::Ref<const RealMatrix>& inner,
                       const Eigen::Ref<const RealMatrix>& rhs) {
  Eigen::LDLT<RealMatrix> ldlt(inner);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
    throw Error(ErrorCode::kSingularInnerMatrix, "R + BᵀPB is numerically singular");
  }
  return ldlt.solve(rhs);
}

double are_residual(const LinearSystem& sys, const CostWeights& weights, const SymMatrix& p) {
  weights.require_compatible(sys);
  const RealMatrix& a = sys.a();
  const RealMatrix& b = sys.b();
  const RealMatrix& pm = p.matrix();
  const RealMatrix bpa = b.transpose() * pm * a;
  const RealMatrix inner = weights.r().matrix() + b.transpose() * pm * b;
  const RealMatrix lhs = a.transpose() * pm * a - pm -
                         bpa.transpose() * solve_inner(inner, bpa) + weights.q().matrix();
  return lhs.norm();
}

RealMatrix optimal_gain(const LinearSystem& sys, const CostWeights& weights, const SymMatrix& p) {
  weights.require_compatible(sys);
  const RealMatrix& b = sys.b();
  const RealMatrix inner = weights.r().matrix() + b.transpose() * p.matrix() * b;
  return solve_inner(inner, b.transpose() * p.matrix() * sys.a());
}

SymMatrix evaluate_policy(const LinearSystem& sys, const CostWeights& weights,
                          const Eigen::Ref<const RealMatrix>& gain) {
  const RealMatrix closed = sys.closed_loop(gain);
  const SymMatrix w(weights.q().matrix() + gain.transpose() * weights.r().matrix() * gain);
  return solve_discrete_lyapunov(closed, w);
}

PiResult hewer_pi(const LinearSystem& sys, const CostWeights& weights,
                  const Eigen::Ref<const RealMatrix>& k0, double tol, int max_iter) {
  weights.require_compatible(sys);
  if (!(tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "hewer_pi: tol must be > 0");
  const double rho0 = spectral_radius(sys.closed_loop(k0));
  if (rho0 >= 1.0) {
    std::ostringstream os;
    os << "hewer_pi: initial gain is not stabilizing (spectral radius " << rho0 << ")";
    throw Error(ErrorCode::kNotStabilizing, os.str());
  }

  PiResult result;
  RealMatrix gain = k0;
  double change = 0.0;
  for (int i = 0; i < max_iter; ++i) {
    PiStep step;
    step.i = i;
    step.gain = gain;
    step.p = evaluate_policy(sys, weights, gain);
    step.next_gain = optimal_gain(sys, weights, step.p);
    if (i > 0) {
      change = (step.p.matrix() - result.trace.back().p.matrix()).norm();
      step.change = change;
    }
    gain = step.next_gain;
    result.trace.push_back(std::move(step));
    if (i > 0 && change < tol) {
      const PiStep& last = result.trace.back();
      result.solution.p = last.p;
      result.solution.k = last.next_gain;
      result.solution.iterations = i;
      result.solution.residual = are_residual(sys, weights, last.p);
      return result;
    }
  }
  throw MaxIterExceeded(max_iter, change,
                        "hewer_pi: no convergence within " + std::to_string(max_iter) +
                            " iterations");
}

ViResult value_iteration(const LinearSystem& sys, const CostWeights& weights, const SymMatrix& p0,
                         double tol, int max_iter, bool record_trace) {
  weights.require_compatible(sys);
  if (p0.dim() != sys.states()) {
    throw Error(ErrorCode::kDimensionMismatch, "value_iteration: P0 has wrong dimension");
  }
  if (!is_positive_semidefinite(p0)) {
    throw Error(ErrorCode::kInvalidArgument, "value_iteration: P0 must be positive semidefinite");
  }
  const RealMatrix& a = sys.a();
  const RealMatrix& b = sys.b();
  const RealMatrix& q = weights.q().matrix();
  const RealMatrix& r = weights.r().matrix();

  ViResult result;
  RealMatrix p = p0.matrix();
  double change = 0.0;
  for (int k = 0; k < max_iter; ++k) {
    const RealMatrix bpa = b.transpose() * p * a;
    const RealMatrix inner = r + b.transpose() * p * b;
    const SymMatrix next(q + a.transpose() * p * a - bpa.transpose() * solve_inner(inner, bpa));
    change = (next.matrix() - p).norm();
    p = next.matrix();
    if (record_trace) result.trace.push_back(next);
    if (change < tol) {
      result.solution.p = next;
      result.solution.k = optimal_gain(sys, weights, next);
      result.solution.iterations = k + 1;
      result.solution.residual = are_residual(sys, weights, next);
      return result;
    }
  }
  throw MaxIterExceeded(max_iter, change,
                        "value_iteration: no convergence within " + std::to_string(max_iter) +
                            " iterations");
}

AreSolution riccati_oracle(const LinearSystem& sys, const CostWeights& weights) {
  return value_iteration(sys, weights, SymMatrix::zero(sys.states()), 1e-12).solution;
}

}  // namespace spi
