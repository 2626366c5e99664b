#include "spi/spi_model_free.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spi {

RealVector pack_unknowns(const SymMatrix& p, const Eigen::Ref<const RealMatrix>& m,
                         const SymMatrix& l) {
  const RealVector vp = vecs(p);
  const RealVector vm = vec(m);
  const RealVector vl = vecs(l);
  RealVector z(vp.size() + vm.size() + vl.size());
  z << vp, vm, vl;
  return z;
}

RegressionData build_regression_data(const Trajectory& traj) {
  if (traj.states.empty() || traj.inputs.empty()) {
    throw Error(ErrorCode::kInsufficientSamples, "trajectory holds no transitions");
  }
  if (traj.states.size() != traj.inputs.size() + 1) {
    throw Error(ErrorCode::kDimensionMismatch, "trajectory needs exactly one more state than inputs");
  }
  RegressionData data;
  data.n = traj.states.front().size();
  data.m = traj.inputs.front().size();
  const Eigen::Index n = data.n;
  const Eigen::Index m = data.m;
  const auto l = static_cast<Eigen::Index>(traj.transitions());
  if (l < data.unknowns()) {
    std::ostringstream os;
    os << "trajectory has " << l << " transitions but the regression has " << data.unknowns()
       << " unknowns";
    throw Error(ErrorCode::kInsufficientSamples, os.str());
  }

  data.delta_xx.resize(l, n * n);
  data.delta_ux.resize(l, m * n);
  data.d_x.resize(l, packed_size(n));
  data.D_x.resize(l, packed_size(n));
  data.d_u.resize(l, packed_size(m));
  data.states.resize(l, n);
  for (Eigen::Index k = 0; k < l; ++k) {
    const RealVector& x = traj.states[k];
    const RealVector& u = traj.inputs[k];
    const RealVector& x_next = traj.states[k + 1];
    if (x.size() != n || u.size() != m || x_next.size() != n) {
      throw Error(ErrorCode::kDimensionMismatch, "trajectory samples have inconsistent sizes");
    }
    data.delta_xx.row(k) = kron(x, x).transpose();
    data.delta_ux.row(k) = kron(u, x).transpose();
    data.d_x.row(k) = vecv(x).transpose();
    data.D_x.row(k) = vecv(x_next).transpose();
    data.d_u.row(k) = vecv(u).transpose();
    data.states.row(k) = x.transpose();
  }
  return data;
}

bool check_rank_condition(const RegressionData& data, double tol) {
  if (data.samples() == 0) return false;
  RealMatrix stacked(data.samples(),
                     data.delta_xx.cols() + data.delta_ux.cols() + data.d_u.cols());
  stacked << data.delta_xx, data.delta_ux, data.d_u;
  return numerical_rank(stacked, tol) == data.unknowns();
}

RegressionSystem assemble_theta_gamma(const RegressionData& data,
                                      const Eigen::Ref<const RealMatrix>& gain, double cum,
                                      const CostWeights& weights) {
  const Eigen::Index n = data.n;
  const Eigen::Index m = data.m;
  if (gain.rows() != m || gain.cols() != n || weights.q().dim() != n || weights.r().dim() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "gain or weights do not match the regression data");
  }
  if (!(cum > 0.0)) throw Error(ErrorCode::kInvalidArgument, "cumulative factor must be > 0");
  const double s = cum * cum;
  const Eigen::Index l = data.samples();

  RealMatrix d_kx(l, packed_size(m));
  for (Eigen::Index k = 0; k < l; ++k) {
    d_kx.row(k) = vecv(gain * data.states.row(k).transpose()).transpose();
  }
  const RealMatrix kt_kron_i = kron(gain.transpose(), RealMatrix::Identity(n, n));

  RegressionSystem sys;
  sys.theta.resize(l, data.unknowns());
  sys.theta << s * data.D_x - data.d_x, -2.0 * s * (data.delta_xx * kt_kron_i + data.delta_ux),
      s * (d_kx - data.d_u);
  const RealMatrix cost = weights.q().matrix() + gain.transpose() * weights.r().matrix() * gain;
  sys.gamma = data.delta_xx * vec(cost);
  return sys;
}

RegressionSolution solve_regression(const RegressionSystem& system, Eigen::Index n,
                                    Eigen::Index m) {
  const Eigen::Index unknowns = packed_size(n) + n * m + packed_size(m);
  if (system.theta.cols() != unknowns || system.gamma.size() != system.theta.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "regression system has wrong shape");
  }
  if (system.theta.rows() < unknowns) {
    throw Error(ErrorCode::kRankDeficient, "fewer regression rows than unknowns");
  }
  Eigen::ColPivHouseholderQR<RealMatrix> qr(system.theta);
  qr.setThreshold(1e-12);
  if (qr.rank() < unknowns) {
    std::ostringstream os;
    os << "regression matrix has rank " << qr.rank() << " < " << unknowns
       << "; the data is not exciting enough";
    throw Error(ErrorCode::kRankDeficient, os.str());
  }
  const RealVector z = qr.solve(-system.gamma);

  RegressionSolution sol;
  sol.p = unvecs(z.head(packed_size(n)), n);
  sol.m = unvec(z.segment(packed_size(n), n * m), n, m);
  sol.l = unvecs(z.tail(packed_size(m)), m);
  sol.residual = (system.theta * z + system.gamma).norm();
  return sol;
}

RealMatrix model_free_gain_update(const RegressionSolution& sol, const CostWeights& weights,
                                  double cum) {
  if (!(cum > 0.0)) throw Error(ErrorCode::kInvalidArgument, "cumulative factor must be > 0");
  const RealMatrix inner = sol.l.matrix() + weights.r().matrix() / (cum * cum);
  return solve_inner(inner, sol.m.transpose());
}

namespace {

RegressionSolution regress(const RegressionData& data, const Eigen::Ref<const RealMatrix>& gain,
                           double cum, const CostWeights& weights) {
  return solve_regression(assemble_theta_gamma(data, gain, cum, weights), data.n, data.m);
}

}  // namespace

SearchBResult search_b(const RegressionData& data, const Eigen::Ref<const RealMatrix>& k0,
                       const CostWeights& weights, const SearchBOptions& options) {
  if (!(options.b_init >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "b_init must be >= 1");
  if (!(options.delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be > 0");

  double b = options.b_init;
  for (int increments = 0; increments <= options.max_probes; ++increments) {
    if (increments > 0) {
      b += options.schedule == StepSchedule::kLinear ? options.delta * increments : options.delta;
    }
    try {
      RegressionSolution sol = regress(data, k0, 1.0 / b, weights);
      if (is_positive_definite(sol.p)) return {b, increments, std::move(sol)};
    } catch (const Error& e) {
      // A scaled plant with reciprocal eigenvalue pairs makes θ singular at
      // this particular b; move on to the next probe.
      if (e.code() != ErrorCode::kRankDeficient) throw;
    }
  }
  std::ostringstream os;
  os << "no b up to " << b << " produced a positive definite P0 after " << options.max_probes
     << " increments";
  throw Error(ErrorCode::kProbesExhausted, os.str());
}

ScalingChoice choose_c_model_free(const SymMatrix& p, const Eigen::Ref<const RealMatrix>& next_gain,
                                  const CostWeights& weights, const ScalingOptions& options) {
  const SymMatrix q_script(p.matrix() - weights.q().matrix() -
                           next_gain.transpose() * weights.r().matrix() * next_gain);
  Eigen::JacobiSVD<RealMatrix> svd(q_script.matrix());
  const RealVector& sv = svd.singularValues();

  ScalingChoice choice;
  choice.q_min_singular = sv.minCoeff();
  if (choice.q_min_singular <= options.eps_inv * sv.maxCoeff()) {
    choice.branch = ScalingBranch::kNonInvertible;
    // c²𝒬 < P̃ needs no inverse of 𝒬: any c < λ_max(P̃⁻¹𝒬)^{-1/2} certifies
    // it. Without this a nearly singular closed loop pins c at 1 for good.
    if (Eigen::LLT<RealMatrix>(p.matrix()).info() == Eigen::Success) {
      Eigen::GeneralizedSelfAdjointEigenSolver<RealMatrix> ges(q_script.matrix(), p.matrix(),
                                                               Eigen::EigenvaluesOnly);
      const double top = ges.eigenvalues().maxCoeff();
      if (top > 0.0 && 1.0 / std::sqrt(top) > 1.0 + options.eps_margin) {
        choice.c = interior_scaling(1.0 / std::sqrt(top), options.lambda, 1.0);
      }
    }
    return choice;
  }
  // For 𝒬 > 0, P̃𝒬⁻¹ is similar to the symmetric 𝒬^{-1/2}P̃𝒬^{-1/2}; its
  // smallest singular value is the smallest generalized eigenvalue of
  // (P̃, 𝒬), which is what c²𝒬 < P̃ requires. The singular values of the
  // non-symmetric product itself can drop below 1 and stall the scaling.
  Eigen::LLT<RealMatrix> llt(q_script.matrix());
  if (llt.info() == Eigen::Success) {
    Eigen::GeneralizedSelfAdjointEigenSolver<RealMatrix> ges(p.matrix(), q_script.matrix(),
                                                             Eigen::EigenvaluesOnly);
    choice.bound = std::sqrt(std::max(ges.eigenvalues().minCoeff(), 0.0));
  } else {
    // Indefinite 𝒬: no c > 1 is certified; report the raw product and keep c = 1.
    const RealMatrix ratio = q_script.matrix().transpose().colPivHouseholderQr()
                                 .solve(p.matrix().transpose())
                                 .transpose();  // P̃·𝒬⁻¹
    choice.bound = std::sqrt(min_singular_value(ratio));
    choice.branch = ScalingBranch::kBoundFallback;
    return choice;
  }
  if (*choice.bound <= 1.0 + options.eps_margin) {
    choice.branch = ScalingBranch::kBoundFallback;
    return choice;
  }
  choice.branch = ScalingBranch::kInterior;
  choice.c = interior_scaling(*choice.bound, options.lambda, 1.0);
  return choice;
}

SpiReport spi_model_free(const RegressionData& data, const Eigen::Ref<const RealMatrix>& k0,
                         const CostWeights& weights, const ModelFreeOptions& options) {
  if (!check_rank_condition(data)) {
    throw Error(ErrorCode::kRankDeficient,
                "rank condition on [delta_xx, delta_ux, d_u] fails; collect richer data");
  }
  if (options.max_iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_iterations must be >= 1");
  }
  SpiReport report;
  SearchBResult found = search_b(data, k0, weights, options.search);
  report.b = found.b;
  report.b_probes = found.increments;

  // Loop 1: scaled iterations until the cumulative factor reaches 1.
  RealMatrix gain = k0;
  double c = 1.0;
  double cum = 1.0 / report.b;
  std::optional<RegressionSolution> pending = std::move(found.solution);
  int i = 0;
  double change = 0.0;
  while (cum < 1.0) {
    if (i >= options.max_iterations) {
      throw MaxIterExceeded(i, change,
                            "scaling loop did not reach a cumulative factor of 1 within " +
                                std::to_string(options.max_iterations) + " iterations");
    }
    const RegressionSolution sol = pending ? std::move(*pending) : regress(data, gain, cum, weights);
    pending.reset();

    SpiState state;
    state.i = i;
    state.b = report.b;
    state.c = c;
    state.cum = cum;
    state.gain = gain;
    state.p = sol.p;
    state.next_gain = model_free_gain_update(sol, weights, cum);
    if (!report.phase1.empty()) {
      change = (state.p.matrix() - report.phase1.back().p.matrix()).norm();
      state.change = change;
    }
    const ScalingChoice choice = choose_c_model_free(state.p, state.next_gain, weights,
                                                     options.scaling);
    state.q_min_singular = choice.q_min_singular;
    state.c_bound = choice.bound;
    state.branch = choice.branch;
    if (choice.branch == ScalingBranch::kBoundFallback) ++report.bound_fallbacks;

    c = choice.c;
    gain = state.next_gain;
    cum *= c;
    report.phase1.push_back(std::move(state));
    ++i;
  }

  report.handoff_index = i;
  report.handoff_cum = cum;
  report.handoff_c = c;
  report.handoff_gain = gain;

  // Loop 2: cum fixed at 1; plain data-driven policy iteration.
  change = 0.0;
  for (int step = 0; step < options.max_iterations; ++step) {
    const RegressionSolution sol = regress(data, gain, 1.0, weights);
    PiStep pi;
    pi.i = report.handoff_index + step;
    pi.gain = gain;
    pi.p = sol.p;
    pi.next_gain = model_free_gain_update(sol, weights, 1.0);
    if (step > 0) {
      change = (pi.p.matrix() - report.phase2.back().p.matrix()).norm();
      pi.change = change;
    }
    gain = pi.next_gain;
    report.phase2.push_back(std::move(pi));
    if (step > 0 && change < options.tol) {
      const PiStep& last = report.phase2.back();
      report.solution.p = last.p;
      report.solution.k = last.next_gain;
      report.solution.iterations = last.i;
      report.solution.residual = sol.residual;
      return report;
    }
  }
  throw MaxIterExceeded(options.max_iterations, change,
                        "data-driven policy iteration did not converge within " +
                            std::to_string(options.max_iterations) + " iterations");
}

}  // namespace spi
