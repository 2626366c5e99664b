#pragma once

#include <vector>

#include "spi/lti.hpp"

namespace spi {

struct AreSolution {
  SymMatrix p;
  RealMatrix k;
  // ARE residual ‖·‖_F at p for model-based solvers. The model-free solver
  // cannot evaluate the ARE and stores the final regression residual instead.
  double residual = 0.0;
  int iterations = 0;
};

/// One policy-iteration step: P_i evaluates K_i, K_{i+1} improves on it.
struct PiStep {
  int i = 0;
  RealMatrix gain;       // K_i
  SymMatrix p;           // P_i
  RealMatrix next_gain;  // K_{i+1}
  double change = 0.0;   // ‖P_i − P_{i−1}‖_F, 0 for the first step
};

struct PiResult {
  AreSolution solution;
  std::vector<PiStep> trace;
};

struct ViResult {
  AreSolution solution;
  // Filled only when requested: P_1, P_2, ... (P_0 excluded).
  std::vector<SymMatrix> trace;
};

inline constexpr int kDefaultPiMaxIter = 100;
inline constexpr int kDefaultViMaxIter = 100000;

/// ‖AᵀPA − P − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q‖_F.
double are_residual(const LinearSystem& sys, const CostWeights& weights, const SymMatrix& p);

/// (R + BᵀPB)⁻¹BᵀPA. Throws Error(kSingularInnerMatrix).
RealMatrix optimal_gain(const LinearSystem& sys, const CostWeights& weights, const SymMatrix& p);

/// Solves inner·X = rhs for symmetric `inner`, throwing
/// Error(kSingularInnerMatrix) when inner is numerically singular.
RealMatrix solve_inner(const Eigen::Ref<const RealMatrix>& inner,
                       const Eigen::Ref<const RealMatrix>& rhs);

/// Policy evaluation: solves P = Q + KᵀRK + (A − BK)ᵀP(A − BK).
SymMatrix evaluate_policy(const LinearSystem& sys, const CostWeights& weights,
                          const Eigen::Ref<const RealMatrix>& gain);

/// Hewer's policy iteration from a stabilizing gain. Stops at the first i ≥ 1
/// with ‖P_i − P_{i−1}‖_F < tol and returns (P_i, K_{i+1}).
///
/// Throws Error(kNotStabilizing) if ρ(A − B·K0) ≥ 1 and MaxIterExceeded when
/// the tolerance is not met within max_iter evaluations.
PiResult hewer_pi(const LinearSystem& sys, const CostWeights& weights,
                  const Eigen::Ref<const RealMatrix>& k0, double tol,
                  int max_iter = kDefaultPiMaxIter);

/// Riccati recursion P_{k+1} = Q + AᵀP_kA − AᵀP_kB(R + BᵀP_kB)⁻¹BᵀP_kA from
/// P0 ≥ 0. Stops when ‖P_{k+1} − P_k‖_F < tol.
ViResult value_iteration(const LinearSystem& sys, const CostWeights& weights, const SymMatrix& p0,
                         double tol, int max_iter = kDefaultViMaxIter, bool record_trace = false);

/// Reference solution: value iteration from P0 = 0 with tol 1e-12.
AreSolution riccati_oracle(const LinearSystem& sys, const CostWeights& weights);

}  // namespace spi
