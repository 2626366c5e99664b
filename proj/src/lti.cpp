#include "spi/lti.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <utility>

namespace spi {

LinearSystem::LinearSystem(RealMatrix a, RealMatrix b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() == 0 || a_.rows() != a_.cols()) {
    std::ostringstream os;
    os << "LinearSystem: A must be square and non-empty, got " << a_.rows() << "x" << a_.cols();
    throw Error(ErrorCode::kDimensionMismatch, os.str());
  }
  if (b_.rows() != a_.rows() || b_.cols() == 0) {
    std::ostringstream os;
    os << "LinearSystem: B must have " << a_.rows() << " rows and at least one column, got "
       << b_.rows() << "x" << b_.cols();
    throw Error(ErrorCode::kDimensionMismatch, os.str());
  }
  require_finite(a_, "A");
  require_finite(b_, "B");
}

RealMatrix LinearSystem::closed_loop(const Eigen::Ref<const RealMatrix>& gain) const {
  if (gain.rows() != inputs() || gain.cols() != states()) {
    std::ostringstream os;
    os << "gain must be " << inputs() << "x" << states() << ", got " << gain.rows() << "x"
       << gain.cols();
    throw Error(ErrorCode::kDimensionMismatch, os.str());
  }
  return a_ - b_ * gain;
}

CostWeights::CostWeights(SymMatrix q, SymMatrix r) : q_(std::move(q)), r_(std::move(r)) {
  require_finite(q_.matrix(), "Q");
  require_finite(r_.matrix(), "R");
  if (q_.dim() == 0 || r_.dim() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "CostWeights: Q and R must be non-empty");
  }
  if (!is_positive_semidefinite(q_)) {
    throw Error(ErrorCode::kInvalidArgument, "CostWeights: Q must be positive semidefinite");
  }
  if (!is_positive_definite(r_)) {
    throw Error(ErrorCode::kInvalidArgument, "CostWeights: R must be positive definite");
  }
}

void CostWeights::require_compatible(const LinearSystem& sys) const {
  if (q_.dim() != sys.states() || r_.dim() != sys.inputs()) {
    std::ostringstream os;
    os << "weights are " << q_.dim() << "x" << q_.dim() << " / " << r_.dim() << "x" << r_.dim()
       << " but the plant has n=" << sys.states() << ", m=" << sys.inputs();
    throw Error(ErrorCode::kDimensionMismatch, os.str());
  }
}

DivergenceDetected::DivergenceDetected(int step, Trajectory partial)
    : Error(ErrorCode::kDivergenceDetected,
            "state norm exceeded 1e12 at step " + std::to_string(step)),
      step_(step),
      partial_(std::move(partial)) {}

LinearSystem zoh_discretize(const Eigen::Ref<const RealMatrix>& a_c,
                            const Eigen::Ref<const RealMatrix>& b_c, double sample_time) {
  if (!(sample_time > 0.0) || !std::isfinite(sample_time)) {
    throw Error(ErrorCode::kInvalidArgument, "zoh_discretize: sample time must be finite and > 0");
  }
  const Eigen::Index n = a_c.rows();
  const Eigen::Index m = b_c.cols();
  if (a_c.cols() != n || b_c.rows() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "zoh_discretize: incompatible A_c/B_c shapes");
  }
  require_finite(a_c, "A_c");
  require_finite(b_c, "B_c");

  RealMatrix augmented = RealMatrix::Zero(n + m, n + m);
  augmented.topLeftCorner(n, n) = a_c;
  augmented.topRightCorner(n, m) = b_c;
  const RealMatrix phi = matrix_exp(augmented, sample_time);
  return LinearSystem(phi.topLeftCorner(n, n), phi.topRightCorner(n, m));
}

Trajectory simulate(const LinearSystem& sys, const Eigen::Ref<const RealVector>& x0,
                    const InputSource& policy, int steps) {
  if (x0.size() != sys.states()) {
    throw Error(ErrorCode::kDimensionMismatch, "simulate: x0 has wrong dimension");
  }
  if (steps < 0) throw Error(ErrorCode::kInvalidArgument, "simulate: steps must be >= 0");

  Trajectory traj;
  traj.states.reserve(steps + 1);
  traj.inputs.reserve(steps);
  traj.states.emplace_back(x0);
  for (int k = 0; k < steps; ++k) {
    const RealVector& x = traj.states.back();
    RealVector u = policy(k, x);
    if (u.size() != sys.inputs()) {
      throw Error(ErrorCode::kDimensionMismatch, "simulate: input source has wrong dimension");
    }
    RealVector next = sys.a() * x + sys.b() * u;
    traj.inputs.push_back(std::move(u));
    const bool diverged = !next.allFinite() || next.norm() > kDivergenceBound;
    traj.states.push_back(std::move(next));
    if (diverged) throw DivergenceDetected(k + 1, std::move(traj));
  }
  return traj;
}

InputSource zero_input(Eigen::Index inputs) {
  return [inputs](int, const RealVector&) { return RealVector::Zero(inputs).eval(); };
}

InputSource state_feedback(RealMatrix gain) {
  return [gain = std::move(gain)](int, const RealVector& x) { return RealVector(-gain * x); };
}

InputSource delayed_feedback(RealMatrix gain, int open_loop_steps) {
  return [gain = std::move(gain), open_loop_steps](int k, const RealVector& x) {
    if (k < open_loop_steps) return RealVector::Zero(gain.rows()).eval();
    return RealVector(-gain * x);
  };
}

double uniform_unit(std::uint64_t raw) {
  return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ExplorationInput::ExplorationInput(Eigen::Index channels, int num_terms, double freq_low,
                                   double freq_high, std::uint64_t seed) {
  if (channels < 1 || num_terms < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "exploration input needs at least one channel and one term");
  }
  if (!(freq_low <= freq_high) || !std::isfinite(freq_low) || !std::isfinite(freq_high)) {
    throw Error(ErrorCode::kInvalidArgument, "exploration input needs freq_low <= freq_high");
  }
  std::mt19937_64 engine(seed);
  freqs_.reserve(channels);
  for (Eigen::Index j = 0; j < channels; ++j) {
    RealVector w(num_terms);
    for (int h = 0; h < num_terms; ++h) {
      w(h) = freq_low + (freq_high - freq_low) * uniform_unit(engine());
    }
    freqs_.push_back(std::move(w));
  }
}

RealVector ExplorationInput::at(int k) const {
  RealVector u(static_cast<Eigen::Index>(freqs_.size()));
  for (std::size_t j = 0; j < freqs_.size(); ++j) {
    double sum = 0.0;
    for (Eigen::Index h = 0; h < freqs_[j].size(); ++h) sum += std::sin(freqs_[j](h) * k);
    u(static_cast<Eigen::Index>(j)) = sum;
  }
  return u;
}

InputSource ExplorationInput::source() const {
  return [self = *this](int k, const RealVector&) { return self.at(k); };
}

namespace {

// Stacks [M, F·M, F²·M, ...] with n blocks.
RealMatrix krylov_blocks(const RealMatrix& f, const RealMatrix& m) {
  const Eigen::Index n = f.rows();
  RealMatrix out(n, n * m.cols());
  RealMatrix block = m;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleCols(i * m.cols(), m.cols()) = block;
    block = f * block;
  }
  return out;
}

}  // namespace

bool is_controllable(const LinearSystem& sys, double tol) {
  return numerical_rank(krylov_blocks(sys.a(), sys.b()), tol) == sys.states();
}

bool is_observable(const Eigen::Ref<const RealMatrix>& a, const Eigen::Ref<const RealMatrix>& c,
                   double tol) {
  if (a.rows() != a.cols() || c.cols() != a.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "is_observable: incompatible A/C shapes");
  }
  const RealMatrix at = a.transpose();
  const RealMatrix ct = c.transpose();
  return numerical_rank(krylov_blocks(at, ct), tol) == a.rows();
}

RealMatrix psd_sqrt(const SymMatrix& s) {
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(s.matrix());
  const RealVector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace spi
