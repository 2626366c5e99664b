#pragma once

#include "spi/spi_model_based.hpp"

namespace spi {

/// Sample matrices built once from a recorded trajectory. Row k of every
/// block derives from time index k (k = 0..l−1).
struct RegressionData {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  RealMatrix delta_xx;  // l×n²,        rows (x_k ⊗ x_k)ᵀ
  RealMatrix delta_ux;  // l×mn,        rows (u_k ⊗ x_k)ᵀ
  RealMatrix d_x;       // l×n(n+1)/2,  rows vecv(x_k)ᵀ
  RealMatrix D_x;       // l×n(n+1)/2,  rows vecv(x_{k+1})ᵀ
  RealMatrix d_u;       // l×m(m+1)/2,  rows vecv(u_k)ᵀ
  RealMatrix states;    // l×n,         rows x_kᵀ (for d_{K̃x})

  Eigen::Index samples() const { return delta_xx.rows(); }
  /// n(n+1)/2 + mn + m(m+1)/2.
  Eigen::Index unknowns() const { return packed_size(n) + n * m + packed_size(m); }
};

/// θ_i and Γ_i; θ_i·[vecs(P̃); vec(M); vecs(L)] = −Γ_i.
struct RegressionSystem {
  RealMatrix theta;
  RealVector gamma;
};

struct RegressionSolution {
  SymMatrix p;   // P̃_i
  RealMatrix m;  // AᵀP̃_iB, n×m
  SymMatrix l;   // BᵀP̃_iB
  double residual = 0.0;  // ‖θz + Γ‖₂
};

/// Packs (P, M, L) in θ's column order.
RealVector pack_unknowns(const SymMatrix& p, const Eigen::Ref<const RealMatrix>& m,
                         const SymMatrix& l);

inline constexpr double kRankTolerance = 1e-10;

/// Throws Error(kInsufficientSamples) when the trajectory is shorter than
/// the number of unknowns.
RegressionData build_regression_data(const Trajectory& traj);

/// rank([δ_xx, δ_ux, d_u]) equals n(n+1)/2 + mn + m(m+1)/2.
bool check_rank_condition(const RegressionData& data, double tol = kRankTolerance);

RegressionSystem assemble_theta_gamma(const RegressionData& data,
                                      const Eigen::Ref<const RealMatrix>& gain, double cum,
                                      const CostWeights& weights);

/// Least-squares solve through column-pivoted Householder QR of θ. Throws
/// Error(kRankDeficient) when θ does not have full column rank.
RegressionSolution solve_regression(const RegressionSystem& system, Eigen::Index n,
                                    Eigen::Index m);

/// (L + R/cum²)⁻¹Mᵀ.
RealMatrix model_free_gain_update(const RegressionSolution& sol, const CostWeights& weights,
                                  double cum);

enum class StepSchedule {
  kConstant,  // b ← b + δ
  kLinear,    // b ← b + δ·j on the j-th increment
};

struct SearchBOptions {
  double b_init = 1.0;
  double delta = 0.1;
  StepSchedule schedule = StepSchedule::kConstant;
  int max_probes = 1000;  // increments beyond b_init
};

struct SearchBResult {
  double b = 0.0;
  int increments = 0;
  RegressionSolution solution;  // at i = 0, cum = 1/b
};

/// Probes b_init, b_init + δ, ... until the regression yields a positive
/// definite P̃_0. Throws Error(kProbesExhausted).
SearchBResult search_b(const RegressionData& data, const Eigen::Ref<const RealMatrix>& k0,
                       const CostWeights& weights, const SearchBOptions& options = {});

struct ScalingChoice {
  double c = 1.0;
  ScalingBranch branch = ScalingBranch::kNonInvertible;
  double q_min_singular = 0.0;  // σ(𝒬_i)
  std::optional<double> bound;  // σ(P̃_i𝒬_i⁻¹)^{1/2}, present iff 𝒬_i invertible
};

struct ScalingOptions {
  double lambda = 0.5;
  double eps_inv = 1e-8;
  double eps_margin = 1e-6;
};

/// Scaling factor from 𝒬_i = P̃_i − Q − K̃_{i+1}ᵀRK̃_{i+1}: 1 when 𝒬_i is
/// indefinite or the bound σ(P̃_i𝒬_i⁻¹)^{1/2} does not exceed
/// 1 + eps_margin, else 1 + λ(bound − 1). For 𝒬_i > 0 the bound is taken on
/// the symmetrized 𝒬_i^{-1/2}P̃_i𝒬_i^{-1/2}. When 𝒬_i is singular
/// (σ_min ≤ eps_inv·‖𝒬_i‖₂) no bound is reported and the same rule runs on
/// λ_max(P̃_i⁻¹𝒬_i)^{-1/2}, which stays finite; c = 1 if 𝒬_i ≤ 0.
ScalingChoice choose_c_model_free(const SymMatrix& p, const Eigen::Ref<const RealMatrix>& next_gain,
                                  const CostWeights& weights, const ScalingOptions& options = {});

struct ModelFreeOptions {
  SearchBOptions search;
  ScalingOptions scaling;
  double tol = 1e-5;
  int max_iterations = 500;  // applied to each loop separately
};

/// Data-driven scaling policy iteration. Uses only `data`; the plant matrices
/// are never consulted. Throws Error(kRankDeficient) when the rank condition
/// fails, Error(kProbesExhausted) and MaxIterExceeded.
SpiReport spi_model_free(const RegressionData& data, const Eigen::Ref<const RealMatrix>& k0,
                         const CostWeights& weights, const ModelFreeOptions& options = {});

}  // namespace spi
