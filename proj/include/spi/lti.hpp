#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "spi/errors.hpp"
#include "spi/matkit.hpp"

namespace spi {

/// Discrete-time plant x_{k+1} = A x_k + B u_k.
class LinearSystem {
 public:
  /// Throws Error(kDimensionMismatch) or Error(kNonFinite) on invalid input.
  LinearSystem(RealMatrix a, RealMatrix b);

  const RealMatrix& a() const { return a_; }
  const RealMatrix& b() const { return b_; }
  Eigen::Index states() const { return a_.rows(); }
  Eigen::Index inputs() const { return b_.cols(); }

  /// A − B·K.
  RealMatrix closed_loop(const Eigen::Ref<const RealMatrix>& gain) const;

 private:
  RealMatrix a_;
  RealMatrix b_;
};

/// State and input weights of the quadratic cost; Q ≥ 0 and R > 0.
class CostWeights {
 public:
  /// Throws Error(kInvalidArgument) when Q is not PSD or R is not PD.
  CostWeights(SymMatrix q, SymMatrix r);

  const SymMatrix& q() const { return q_; }
  const SymMatrix& r() const { return r_; }

  /// Checks dimensions against a plant.
  void require_compatible(const LinearSystem& sys) const;

 private:
  SymMatrix q_;
  SymMatrix r_;
};

struct Trajectory {
  std::vector<RealVector> states;  // x_0..x_l
  std::vector<RealVector> inputs;  // u_0..u_{l-1}

  std::size_t transitions() const { return inputs.size(); }
};

/// Produces u_k from (k, x_k).
using InputSource = std::function<RealVector(int k, const RealVector& x)>;

/// Raised by simulate when ‖x_k‖ exceeds kDivergenceBound. Carries the
/// trajectory up to (and including) the offending state.
class DivergenceDetected : public Error {
 public:
  DivergenceDetected(int step, Trajectory partial);

  int step() const noexcept { return step_; }
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  int step_;
  Trajectory partial_;
};

inline constexpr double kDivergenceBound = 1e12;

/// Zero-order-hold discretization through the exponential of the augmented
/// matrix [[A_c, B_c], [0, 0]]·T.
LinearSystem zoh_discretize(const Eigen::Ref<const RealMatrix>& a_c,
                            const Eigen::Ref<const RealMatrix>& b_c, double sample_time);

/// Runs `steps` transitions of the plant from x0.
Trajectory simulate(const LinearSystem& sys, const Eigen::Ref<const RealVector>& x0,
                    const InputSource& policy, int steps);

/// u ≡ 0.
InputSource zero_input(Eigen::Index inputs);
/// u_k = −K x_k.
InputSource state_feedback(RealMatrix gain);
/// u_k = 0 for k < open_loop_steps, −K x_k afterwards.
InputSource delayed_feedback(RealMatrix gain, int open_loop_steps);

/// Sum-of-sinusoids exploration signal. Channel j emits
/// u_k[j] = Σ_h sin(ω_{j,h}·k) with ω drawn uniformly from [freq_low, freq_high).
class ExplorationInput {
 public:
  ExplorationInput(Eigen::Index channels, int num_terms, double freq_low, double freq_high,
                   std::uint64_t seed);

  /// Frequencies of one channel.
  const RealVector& frequencies(Eigen::Index channel) const { return freqs_[channel]; }
  RealVector at(int k) const;
  InputSource source() const;

 private:
  std::vector<RealVector> freqs_;
};

/// Frequencies are drawn from std::mt19937_64 (fully specified by the
/// standard) mapped to [0,1) as (r >> 11)·2⁻⁵³, so draws are identical on
/// every platform.
double uniform_unit(std::uint64_t raw);

/// SplitMix64 step; used to derive independent child seeds from a root seed.
std::uint64_t splitmix64(std::uint64_t x);

bool is_controllable(const LinearSystem& sys, double tol = 1e-8);
bool is_observable(const Eigen::Ref<const RealMatrix>& a, const Eigen::Ref<const RealMatrix>& c,
                   double tol = 1e-8);

/// Symmetric square root of a PSD matrix, used as C in the (A, √Q) check.
RealMatrix psd_sqrt(const SymMatrix& s);

}  // namespace spi
