// Shared generators and independent reference computations for the tests.
// Nothing here calls into the solver code paths it is used to check.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "spi/cli/config.hpp"
#include "spi/lti.hpp"
#include "spi/matkit.hpp"

namespace spi::testing {

/// Hand-rolled random source for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  RealMatrix matrix(Eigen::Index rows, Eigen::Index cols) {
    RealMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }
  RealVector vector(Eigen::Index n) { return matrix(n, 1); }

  RealMatrix symmetric(Eigen::Index n) {
    const RealMatrix g = matrix(n, n);
    return 0.5 * (g + g.transpose());
  }
  /// GGᵀ + floor·I.
  RealMatrix positive_definite(Eigen::Index n, double floor = 0.1) {
    const RealMatrix g = matrix(n, n);
    return g * g.transpose() + floor * RealMatrix::Identity(n, n);
  }
  /// Random square matrix rescaled to the given spectral radius.
  RealMatrix with_radius(Eigen::Index n, double radius) {
    for (;;) {
      const RealMatrix a = matrix(n, n);
      const double r = a.eigenvalues().cwiseAbs().maxCoeff();
      if (r > 1e-3) return a * (radius / r);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline double rho(const RealMatrix& a) { return a.eigenvalues().cwiseAbs().maxCoeff(); }

inline double min_eig(const RealMatrix& s) {
  return Eigen::SelfAdjointEigenSolver<RealMatrix>(0.5 * (s + s.transpose()))
      .eigenvalues()
      .minCoeff();
}

/// Σ_k (Fᵀ)ᵏ W Fᵏ, truncated once terms are negligible or after max_terms.
inline RealMatrix lyapunov_series(const RealMatrix& f, const RealMatrix& w, int max_terms = 10000) {
  RealMatrix sum = w;
  RealMatrix term = w;
  for (int k = 1; k < max_terms; ++k) {
    term = f.transpose() * term * f;
    sum += term;
    if (term.norm() < 1e-18 * (1.0 + sum.norm())) break;
  }
  return sum;
}

/// Riccati recursion from zero, written out independently of the library.
inline RealMatrix dare_by_recursion(const RealMatrix& a, const RealMatrix& b, const RealMatrix& q,
                                   const RealMatrix& r, double tol = 1e-13,
                                   int max_iter = 1000000) {
  RealMatrix p = RealMatrix::Zero(a.rows(), a.cols());
  for (int k = 0; k < max_iter; ++k) {
    const RealMatrix inner = r + b.transpose() * p * b;
    const RealMatrix next = q + a.transpose() * p * a -
                            a.transpose() * p * b * inner.ldlt().solve(b.transpose() * p * a);
    const RealMatrix sym = 0.5 * (next + next.transpose());
    const double change = (sym - p).norm();
    p = sym;
    if (change < tol * (1.0 + p.norm())) break;
  }
  return p;
}

inline RealMatrix gain_from(const RealMatrix& a, const RealMatrix& b, const RealMatrix& r,
                            const RealMatrix& p) {
  return (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
}

/// Positive root of the scalar Riccati equation.
inline double scalar_dare(double a, double b, double q, double r) {
  // b²p² + (r − a²r − qb²)p − qr = 0
  const double qa = b * b;
  const double qb = r - a * a * r - q * b * b;
  const double qc = -q * r;
  return (-qb + std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
}

/// A random controllable plant with PD weights and an initial gain whose
/// closed loop has spectral radius in [rho_lo, rho_hi]. Nearly uncontrollable
/// draws (‖P*‖_F > kMaxRiccatiNorm) are rejected: absolute tolerances on P
/// are meaningless once round-off scales with ‖P*‖.
struct Plant {
  RealMatrix a;
  RealMatrix b;
  RealMatrix q;
  RealMatrix r;
  RealMatrix k0;

  LinearSystem system() const { return LinearSystem(a, b); }
  CostWeights weights() const { return CostWeights(SymMatrix(q), SymMatrix(r)); }
};

inline bool controllable_by_rank(const RealMatrix& a, const RealMatrix& b) {
  const Eigen::Index n = a.rows();
  RealMatrix ctrb(n, n * b.cols());
  RealMatrix block = b;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * b.cols(), b.cols()) = block;
    block = a * block;
  }
  Eigen::JacobiSVD<RealMatrix> svd(ctrb);
  const RealVector& s = svd.singularValues();
  return s(s.size() - 1 < n - 1 ? s.size() - 1 : n - 1) > 1e-6 * s(0);
}

inline constexpr double kMaxRiccatiNorm = 1e3;

inline Plant random_plant(Gen& g, double rho_lo = 0.5, double rho_hi = 3.0,
                          double open_loop_lo = 0.6, double open_loop_hi = 1.2) {
  for (;;) {
    Plant p;
    const int n = g.integer(2, 4);
    const int m = g.integer(1, 2);
    p.a = g.with_radius(n, g.uniform(open_loop_lo, open_loop_hi));
    p.b = g.matrix(n, m);
    if (!controllable_by_rank(p.a, p.b)) continue;
    p.q = g.positive_definite(n, 0.5);
    p.r = g.positive_definite(m, 0.5);
    if (dare_by_recursion(p.a, p.b, p.q, p.r).norm() > kMaxRiccatiNorm) continue;
    for (int attempt = 0; attempt < 2000; ++attempt) {
      const RealMatrix k = g.matrix(m, n) * g.uniform(0.0, 3.0);
      const double r = rho(p.a - p.b * k);
      if (r >= rho_lo && r <= rho_hi) {
        p.k0 = k;
        return p;
      }
    }
  }
}

/// Exploration-driven trajectory: u_k = −K_b x_k + Σ sin(ω k).
inline Trajectory explore(const Plant& p, const RealMatrix& behavior_gain, int steps,
                          std::uint64_t seed, const RealVector& x0) {
  const ExplorationInput e(p.b.cols(), 100, -10.0, 10.0, seed);
  const InputSource src = [&](int k, const RealVector& x) {
    return RealVector(-behavior_gain * x + e.at(k));
  };
  return simulate(p.system(), x0, src, steps);
}

// Power-system example: rounded discretized plant and optimal solution.
inline RealMatrix reference_a() {
  RealMatrix a(3, 3);
  a << 0.8825, 0.0014, 0.0470, 0.0894, 0.9049, 0.0023, 0.0028, 0.0571, 0.9995;
  return a;
}
inline RealMatrix reference_b() {
  RealMatrix b(3, 1);
  b << 0.0001, 0.1190, 0.0036;
  return b;
}
/// The plant discretized from its continuous model (the printed matrices are
/// rounded to four digits).
inline LinearSystem power_plant() {
  const auto [a_c, b_c] = cli::power_system_continuous({});
  return zoh_discretize(a_c, b_c, 0.01);
}
inline RealMatrix reference_p_star() {
  RealMatrix p(3, 3);
  p << 6.4599, 3.2440, 6.3364, 3.2440, 7.6499, 10.1346, 6.3364, 10.1346, 33.5195;
  return p;
}
inline RealMatrix reference_k_star() {
  RealMatrix k(1, 3);
  k << 0.4022, 0.8351, 1.2066;
  return k;
}

}  // namespace spi::testing
