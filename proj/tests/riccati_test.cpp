#include <gtest/gtest.h>

#include <cmath>

#include "spi/errors.hpp"
#include "spi/riccati.hpp"
#include "support.hpp"

namespace spi {
namespace {

using testing::Gen;

LinearSystem scalar_plant(double a, double b) {
  return LinearSystem(RealMatrix::Constant(1, 1, a), RealMatrix::Constant(1, 1, b));
}

CostWeights scalar_weights(double q, double r) {
  return CostWeights(SymMatrix(RealMatrix::Constant(1, 1, q)),
                     SymMatrix(RealMatrix::Constant(1, 1, r)));
}

LinearSystem power_system() { return testing::power_plant(); }
CostWeights unit_weights(int n, int m) {
  return CostWeights(SymMatrix::identity(n), SymMatrix::identity(m));
}

TEST(AreResidual, ScalarClosedFormRoot) {
  const double p = testing::scalar_dare(0.5, 1.0, 1.0, 1.0);
  EXPECT_LT(are_residual(scalar_plant(0.5, 1.0), scalar_weights(1.0, 1.0),
                         SymMatrix(RealMatrix::Constant(1, 1, p))),
            1e-10);
}

TEST(AreResidual, ReferenceSolution) {
  EXPECT_LT(are_residual(power_system(), unit_weights(3, 1), SymMatrix(testing::reference_p_star())),
            5e-3);
}

TEST(AreResidual, ZeroP) {
  EXPECT_NEAR(are_residual(power_system(), unit_weights(3, 1), SymMatrix::zero(3)), std::sqrt(3.0),
              1e-14);
}

TEST(OptimalGain, Examples) {
  EXPECT_EQ(optimal_gain(power_system(), unit_weights(3, 1), SymMatrix::zero(3)).norm(), 0.0);
  const RealMatrix k =
      optimal_gain(power_system(), unit_weights(3, 1), SymMatrix(testing::reference_p_star()));
  EXPECT_LT((k - testing::reference_k_star()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(OptimalGain, ScalarFormula) {
  Gen g(31);
  for (int t = 0; t < 100; ++t) {
    const double a = g.uniform(-2, 2);
    const double b = g.uniform(0.1, 2);
    const double r = g.uniform(0.1, 3);
    const double p = g.uniform(0, 10);
    const RealMatrix k = optimal_gain(scalar_plant(a, b), scalar_weights(1.0, r),
                                      SymMatrix(RealMatrix::Constant(1, 1, p)));
    EXPECT_NEAR(k(0, 0), b * p * a / (r + b * b * p), 1e-13);
  }
}

TEST(SolveInner, RejectsSingular) {
  try {
    solve_inner(RealMatrix::Zero(2, 2), RealMatrix::Ones(2, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularInnerMatrix);
  }
}

TEST(HewerPi, FixedPointConvergesImmediately) {
  const LinearSystem sys = power_system();
  const CostWeights w = unit_weights(3, 1);
  const AreSolution star = riccati_oracle(sys, w);
  const PiResult pi = hewer_pi(sys, w, star.k, 1e-8);
  EXPECT_EQ(pi.solution.iterations, 1);
  EXPECT_LT((pi.solution.p.matrix() - star.p.matrix()).norm(), 1e-8);
}

TEST(HewerPi, RejectsDestabilizingStart) {
  try {
    hewer_pi(power_system(), unit_weights(3, 1), RealMatrix::Zero(1, 3), 1e-5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotStabilizing);
  }
}

TEST(HewerPi, ReferenceSolutionFromStabilizingStart) {
  const LinearSystem sys = power_system();
  RealMatrix k0(1, 3);
  k0 << 0.2, 0.5, 0.5;
  ASSERT_LT(testing::rho(sys.closed_loop(k0)), 1.0);
  const PiResult pi = hewer_pi(sys, unit_weights(3, 1), k0, 1e-5);
  EXPECT_LT((pi.solution.p.matrix() - testing::reference_p_star()).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LT((pi.solution.k - testing::reference_k_star()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(HewerPi, MaxIterExceeded) {
  const LinearSystem sys = power_system();
  RealMatrix k0(1, 3);
  k0 << 0.2, 0.5, 0.5;
  try {
    hewer_pi(sys, unit_weights(3, 1), k0, 1e-14, 2);
    FAIL();
  } catch (const MaxIterExceeded& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMaxIterExceeded);
  }
}

TEST(HewerPi, StableOpenLoopMatchesRecursion) {
  Gen g(32);
  for (int t = 0; t < 50; ++t) {
    const RealMatrix a = g.with_radius(2, g.uniform(0.1, 0.95));
    const RealMatrix b = g.matrix(2, 1);
    const LinearSystem sys(a, b);
    const CostWeights w = unit_weights(2, 1);
    const PiResult pi = hewer_pi(sys, w, RealMatrix::Zero(1, 2), 1e-12);
    const RealMatrix oracle = testing::dare_by_recursion(a, b, RealMatrix::Identity(2, 2),
                                                         RealMatrix::Identity(1, 1));
    EXPECT_LT((pi.solution.p.matrix() - oracle).norm(), 1e-8 * (1 + oracle.norm()));
  }
}

TEST(HewerPi, MonotoneBoundedInvariants) {
  Gen g(33);
  for (int t = 0; t < 50; ++t) {
    const testing::Plant p = testing::random_plant(g, 0.1, 0.99);
    const LinearSystem sys = p.system();
    const CostWeights w = p.weights();
    const RealMatrix star = testing::dare_by_recursion(p.a, p.b, p.q, p.r);
    const PiResult pi = hewer_pi(sys, w, p.k0, 1e-10);
    for (std::size_t i = 0; i < pi.trace.size(); ++i) {
      const PiStep& s = pi.trace[i];
      EXPECT_LT(testing::rho(p.a - p.b * s.gain), 1.0);
      EXPECT_GE(testing::min_eig(s.p.matrix() - star), -1e-8);
      if (i + 1 < pi.trace.size()) {
        EXPECT_GE(testing::min_eig(s.p.matrix() - pi.trace[i + 1].p.matrix()),
                  -1e-8);
      }
    }
    EXPECT_LT(are_residual(sys, w, pi.solution.p), 10 * 1e-10);
  }
}

TEST(ValueIteration, StartingAtSolution) {
  const LinearSystem sys = power_system();
  const CostWeights w = unit_weights(3, 1);
  const AreSolution star = riccati_oracle(sys, w);
  EXPECT_EQ(value_iteration(sys, w, star.p, 1e-8).solution.iterations, 1);
}

TEST(ValueIteration, ReferenceSolutionFromZero) {
  const ViResult vi = value_iteration(power_system(), unit_weights(3, 1), SymMatrix::zero(3), 1e-10);
  EXPECT_LT((vi.solution.p.matrix() - testing::reference_p_star()).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LT((vi.solution.k - testing::reference_k_star()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ValueIteration, ScalarClosedForm) {
  Gen g(34);
  for (int t = 0; t < 50; ++t) {
    const double a = g.uniform(-1.5, 1.5);
    const double b = g.uniform(0.2, 2);
    const double q = g.uniform(0.1, 3);
    const double r = g.uniform(0.1, 3);
    const ViResult vi =
        value_iteration(scalar_plant(a, b), scalar_weights(q, r), SymMatrix::zero(1), 1e-13);
    const double p = testing::scalar_dare(a, b, q, r);
    EXPECT_NEAR(vi.solution.p(0, 0), p, 1e-10 * (1 + p));
  }
}

TEST(ValueIteration, RejectsIndefiniteStart) {
  EXPECT_THROW(value_iteration(power_system(), unit_weights(3, 1), SymMatrix(-RealMatrix::Identity(3, 3)),
                               1e-8),
               Error);
}

TEST(ValueIteration, TraceRecording) {
  const ViResult vi =
      value_iteration(power_system(), unit_weights(3, 1), SymMatrix::zero(3), 1e-5, 100000, true);
  EXPECT_EQ(static_cast<int>(vi.trace.size()), vi.solution.iterations);
  EXPECT_TRUE(value_iteration(power_system(), unit_weights(3, 1), SymMatrix::zero(3), 1e-5)
                  .trace.empty());
}

TEST(Riccati, HewerAndValueIterationAgreeOnRandomSystems) {
  Gen g(35);
  for (int t = 0; t < 40; ++t) {
    const testing::Plant p = testing::random_plant(g, 0.1, 0.99);
    const LinearSystem sys = p.system();
    const CostWeights w = p.weights();
    const PiResult pi = hewer_pi(sys, w, p.k0, 1e-12);
    const AreSolution vi = riccati_oracle(sys, w);
    EXPECT_LT((pi.solution.p.matrix() - vi.p.matrix()).norm(), 1e-6);
    EXPECT_LT(testing::rho(p.a - p.b * vi.k), 1.0);
    EXPECT_GT(vi.p.min_eigenvalue(), 0.0);
  }
}

}  // namespace
}  // namespace spi
