#include "spi/matkit.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "spi/errors.hpp"

namespace spi {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kEigenFailure: return "EigenFailure";
    case ErrorCode::kUnstableF: return "UnstableF";
    case ErrorCode::kIllConditioned: return "IllConditioned";
    case ErrorCode::kSingularInnerMatrix: return "SingularInnerMatrix";
    case ErrorCode::kNotStabilizing: return "NotStabilizing";
    case ErrorCode::kMaxIterExceeded: return "MaxIterExceeded";
    case ErrorCode::kUnstableScaledSystem: return "UnstableScaledSystem";
    case ErrorCode::kInvariantViolated: return "InvariantViolated";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kProbesExhausted: return "ProbesExhausted";
    case ErrorCode::kDivergenceDetected: return "DivergenceDetected";
  }
  return "Unknown";
}

SymMatrix::SymMatrix(const Eigen::Ref<const RealMatrix>& m) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << "SymMatrix requires a square matrix, got " << m.rows() << "x" << m.cols();
    throw Error(ErrorCode::kDimensionMismatch, os.str());
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(Eigen::Index n) { return SymMatrix(RealMatrix::Identity(n, n)); }

SymMatrix SymMatrix::zero(Eigen::Index n) { return SymMatrix(RealMatrix::Zero(n, n)); }

RealVector SymMatrix::eigenvalues() const {
  if (m_.size() == 0) return RealVector();
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double SymMatrix::min_eigenvalue() const {
  const RealVector ev = eigenvalues();
  return ev.size() == 0 ? 0.0 : ev.minCoeff();
}

double pd_tolerance(const SymMatrix& s) {
  const RealVector ev = s.eigenvalues();
  const double norm = ev.size() == 0 ? 0.0 : ev.cwiseAbs().maxCoeff();
  return 1e-10 * (1.0 + norm);
}

bool is_positive_definite(const SymMatrix& s) {
  return s.dim() > 0 && s.min_eigenvalue() > pd_tolerance(s);
}

bool is_positive_semidefinite(const SymMatrix& s) {
  return s.min_eigenvalue() > -pd_tolerance(s);
}

RealVector vecs(const SymMatrix& s) {
  const Eigen::Index n = s.dim();
  RealVector out(packed_size(n));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out(k++) = s(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) out(k++) = 2.0 * s(i, j);
  }
  return out;
}

SymMatrix unvecs(const Eigen::Ref<const RealVector>& packed, Eigen::Index n) {
  if (packed.size() != packed_size(n)) {
    std::ostringstream os;
    os << "unvecs: expected " << packed_size(n) << " entries for n=" << n << ", got "
       << packed.size();
    throw Error(ErrorCode::kDimensionMismatch, os.str());
  }
  RealMatrix m(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = packed(k++);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      m(i, j) = m(j, i) = 0.5 * packed(k++);
    }
  }
  return SymMatrix(m);
}

RealVector vecv(const Eigen::Ref<const RealVector>& z) {
  const Eigen::Index n = z.size();
  RealVector out(packed_size(n));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) out(k++) = z(i) * z(j);
  }
  return out;
}

RealVector vec(const Eigen::Ref<const RealMatrix>& m) {
  RealMatrix copy = m;
  return Eigen::Map<const RealVector>(copy.data(), copy.size());
}

RealMatrix unvec(const Eigen::Ref<const RealVector>& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw Error(ErrorCode::kDimensionMismatch, "unvec: size does not match rows*cols");
  }
  RealVector copy = v;
  return Eigen::Map<const RealMatrix>(copy.data(), rows, cols);
}

RealMatrix kron(const Eigen::Ref<const RealMatrix>& a, const Eigen::Ref<const RealMatrix>& b) {
  const RealMatrix ad = a;
  const RealMatrix bd = b;
  return Eigen::kroneckerProduct(ad, bd).eval();
}

double spectral_radius(const Eigen::Ref<const RealMatrix>& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "spectral_radius: matrix is not square");
  }
  if (a.size() == 0) return 0.0;
  require_finite(a, "spectral_radius input");
  Eigen::EigenSolver<RealMatrix> es;
  es.compute(a, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    const int iterations = static_cast<int>(es.getMaxIterations() * a.rows());
    std::ostringstream os;
    os << "spectral_radius: shifted QR did not converge within " << iterations
       << " iterations";
    throw EigenFailure(iterations, os.str());
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double min_singular_value(const Eigen::Ref<const RealMatrix>& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<RealMatrix> svd(a);
  return svd.singularValues().minCoeff();
}

int numerical_rank(const Eigen::Ref<const RealMatrix>& a, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "numerical_rank: tol must be > 0");
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<RealMatrix> svd(a);
  const RealVector& sv = svd.singularValues();
  const double cutoff = tol * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++rank;
  }
  return rank;
}

RealMatrix matrix_exp(const Eigen::Ref<const RealMatrix>& a, double t) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "matrix_exp: matrix is not square");
  }
  if (!std::isfinite(t)) throw Error(ErrorCode::kNonFinite, "matrix_exp: t is not finite");
  require_finite(a, "matrix_exp input");
  const RealMatrix scaled = a * t;
  return scaled.exp();
}

SymMatrix solve_discrete_lyapunov(const Eigen::Ref<const RealMatrix>& f, const SymMatrix& w) {
  const Eigen::Index n = f.rows();
  if (f.cols() != n || w.dim() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "solve_discrete_lyapunov: F must be square and match W");
  }
  const double rho = spectral_radius(f);
  if (rho >= 1.0 - kLyapunovStabilityMargin) {
    std::ostringstream os;
    os << "solve_discrete_lyapunov: F is not Schur stable (spectral radius " << rho << ")";
    throw Error(ErrorCode::kUnstableF, os.str());
  }
  const RealMatrix ft = f.transpose();
  const RealMatrix lhs = RealMatrix::Identity(n * n, n * n) - kron(ft, ft);
  Eigen::PartialPivLU<RealMatrix> lu(lhs);
  if (!(lu.rcond() > 1e-14)) {
    throw Error(ErrorCode::kIllConditioned,
                "solve_discrete_lyapunov: vectorized system is numerically singular");
  }
  const RealVector p = lu.solve(vec(w.matrix()));
  return SymMatrix(unvec(p, n, n));
}

double lyapunov_residual(const Eigen::Ref<const RealMatrix>& f, const SymMatrix& p,
                         const SymMatrix& w) {
  return (f.transpose() * p.matrix() * f - p.matrix() + w.matrix()).norm();
}

void require_finite(const Eigen::Ref<const RealMatrix>& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::kNonFinite, std::string(what) + " contains non-finite entries");
  }
}

}  // namespace spi
