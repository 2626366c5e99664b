#pragma once

#include <Eigen/Dense>

namespace spi {

/// Dense real matrix; column-major Eigen storage.
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

/// Symmetric matrix. Construction symmetrizes its argument as (M + Mᵀ)/2, so
/// the stored matrix is always exactly symmetric.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Eigen::Ref<const RealMatrix>& m);

  static SymMatrix identity(Eigen::Index n);
  static SymMatrix zero(Eigen::Index n);

  Eigen::Index dim() const { return m_.rows(); }
  const RealMatrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  /// Eigenvalues in ascending order.
  RealVector eigenvalues() const;
  double min_eigenvalue() const;

 private:
  RealMatrix m_;
};

/// Positive-definiteness threshold 1e-10·(1 + ‖S‖₂).
double pd_tolerance(const SymMatrix& s);
/// All eigenvalues above pd_tolerance(s).
bool is_positive_definite(const SymMatrix& s);
/// All eigenvalues above -pd_tolerance(s).
bool is_positive_semidefinite(const SymMatrix& s);

/// Packed vectorization: diagonal entries once, off-diagonal entries doubled,
/// row by row over the upper triangle. Length n(n+1)/2.
RealVector vecs(const SymMatrix& s);
/// Inverse of vecs.
SymMatrix unvecs(const Eigen::Ref<const RealVector>& packed, Eigen::Index n);
/// Quadratic monomials z_i z_j (i ≤ j), row by row. vecv(z)·vecs(S) = zᵀSz.
RealVector vecv(const Eigen::Ref<const RealVector>& z);
/// Column-stacking vectorization.
RealVector vec(const Eigen::Ref<const RealMatrix>& m);
/// Inverse of vec for an rows×cols matrix.
RealMatrix unvec(const Eigen::Ref<const RealVector>& v, Eigen::Index rows, Eigen::Index cols);

/// Number of entries of vecs/vecv for dimension n.
constexpr Eigen::Index packed_size(Eigen::Index n) { return n * (n + 1) / 2; }

RealMatrix kron(const Eigen::Ref<const RealMatrix>& a, const Eigen::Ref<const RealMatrix>& b);

/// Largest eigenvalue modulus. Throws EigenFailure if the QR iteration stalls.
double spectral_radius(const Eigen::Ref<const RealMatrix>& a);

double min_singular_value(const Eigen::Ref<const RealMatrix>& a);

/// Count of singular values strictly above tol·σ_max. A zero matrix has rank 0.
int numerical_rank(const Eigen::Ref<const RealMatrix>& a, double tol);

/// exp(A·t) by scaling and squaring with a Padé core.
RealMatrix matrix_exp(const Eigen::Ref<const RealMatrix>& a, double t);

/// Systems whose spectral radius reaches 1 - kLyapunovStabilityMargin are
/// rejected by solve_discrete_lyapunov.
inline constexpr double kLyapunovStabilityMargin = 1e-9;

/// Solves FᵀPF − P + W = 0 for symmetric P through the vectorized system
/// (I − Fᵀ⊗Fᵀ)vec(P) = vec(W). Cost is O(n⁶); intended for n ≤ 20.
///
/// Throws Error(kUnstableF) when ρ(F) ≥ 1 − kLyapunovStabilityMargin and
/// Error(kIllConditioned) when the vectorized system is numerically singular.
SymMatrix solve_discrete_lyapunov(const Eigen::Ref<const RealMatrix>& f, const SymMatrix& w);

/// ‖FᵀPF − P + W‖_F.
double lyapunov_residual(const Eigen::Ref<const RealMatrix>& f, const SymMatrix& p,
                         const SymMatrix& w);

/// Throws Error(kNonFinite) naming `what` if any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const RealMatrix>& m, const char* what);

}  // namespace spi
