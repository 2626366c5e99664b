#pragma once

#include <optional>
#include <vector>

#include "spi/riccati.hpp"

namespace spi {

/// How the scaling factor c_{i+1} was chosen in the model-free solver.
enum class ScalingBranch {
  kInterior,       // c strictly inside (1, bound)
  kNonInvertible,  // 𝒬_i numerically singular, c = 1
  kBoundFallback,  // bound ≤ 1 + eps_margin, c = 1
};

/// One scaling-phase iteration. Row i evaluates K̃_i on the plant scaled by
/// cum_i = ∏_{j≤i} c_j / b and improves it to K̃_{i+1}.
struct SpiState {
  int i = 0;
  double b = 0.0;
  double c = 1.0;    // c_i; c_0 = 1
  double cum = 0.0;  // ∏_{j≤i} c_j / b
  RealMatrix gain;   // K̃_i
  SymMatrix p;       // P̃_i
  RealMatrix next_gain;  // K̃_{i+1}
  double change = 0.0;   // ‖P̃_i − P̃_{i−1}‖_F, 0 for i = 0
  // Model-free bookkeeping (scaling-bound columns); empty for the model-based solver.
  std::optional<double> q_min_singular;  // σ(𝒬_i)
  std::optional<double> c_bound;         // σ(P̃_i 𝒬_i⁻¹)^{1/2}
  std::optional<ScalingBranch> branch;
};

struct SpiReport {
  double b = 0.0;
  int b_probes = 0;  // model-free only: number of b values tried beyond b_init
  std::vector<SpiState> phase1;
  int handoff_index = 0;     // î
  double handoff_cum = 0.0;  // cum_î before it is reset to 1
  double handoff_c = 1.0;    // c_î
  RealMatrix handoff_gain;   // K̃_î
  int bound_fallbacks = 0;   // model-free only
  AreSolution solution;
  std::vector<PiStep> phase2;  // indices continue from î
};

struct ModelBasedOptions {
  double beta = 1.0;
  double lambda = 0.5;
  double tol = 1e-5;
  int max_iterations = kDefaultPiMaxIter;  // applied to each phase separately
};

/// b = ρ(A − B·K0) + β.
double choose_b_model_based(const LinearSystem& sys, const Eigen::Ref<const RealMatrix>& k0,
                            double beta);

/// Solves cum²(A − BK̃)ᵀP̃(A − BK̃) − P̃ + Q + K̃ᵀRK̃ = 0.
/// Throws Error(kUnstableScaledSystem) if ρ(cum·(A − BK̃)) ≥ 1.
SymMatrix scaled_policy_evaluation(const LinearSystem& sys, const CostWeights& weights,
                                   const Eigen::Ref<const RealMatrix>& gain, double cum);

/// (BᵀP̃B + R/cum²)⁻¹BᵀP̃A.
RealMatrix scaled_policy_improvement(const LinearSystem& sys, const CostWeights& weights,
                                     const SymMatrix& p, double cum);

/// c = 1 + λ(r − 1) with r = 1/ρ(cum·(A − B·K̃_{i+1})).
/// Throws Error(kInvariantViolated) when that spectral radius is ≥ 1.
double choose_c_model_based(const LinearSystem& sys, const Eigen::Ref<const RealMatrix>& next_gain,
                            double cum, double lambda);

/// Interior point 1 + λ(bound − 1) of (1, bound); a non-finite bound (deadbeat
/// closed loop) is replaced by the factor that lifts cum to exactly 2.
double interior_scaling(double bound, double lambda, double cum);

/// Model-based scaling policy iteration from an arbitrary gain K0.
///
/// Phase 1 evaluates and improves on the plant scaled by cum_i and grows cum
/// by c_{i+1} until cum ≥ 1. Phase 2 runs Hewer policy iteration from the
/// handoff gain K̃_î with cum fixed at 1.
SpiReport spi_model_based(const LinearSystem& sys, const CostWeights& weights,
                          const Eigen::Ref<const RealMatrix>& k0,
                          const ModelBasedOptions& options = {});

/// Assumption check: (A, B) controllable and (A, √Q) observable. Throws
/// Error(kInvalidArgument) otherwise.
void require_assumption(const LinearSystem& sys, const CostWeights& weights);

}  // namespace spi
