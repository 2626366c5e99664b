#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spi {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNonFinite,
  kEigenFailure,
  kUnstableF,
  kIllConditioned,
  kSingularInnerMatrix,
  kNotStabilizing,
  kMaxIterExceeded,
  kUnstableScaledSystem,
  kInvariantViolated,
  kInsufficientSamples,
  kRankDeficient,
  kProbesExhausted,
  kDivergenceDetected,
};

/// Stable machine-readable name, e.g. "NotStabilizing".
std::string_view to_string(ErrorCode code);

/// Base error for every failure raised by the library. The code identifies
/// the failure class; what() carries the human-readable diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Eigenvalue iteration did not converge.
class EigenFailure : public Error {
 public:
  EigenFailure(int iterations, const std::string& message)
      : Error(ErrorCode::kEigenFailure, message), iterations_(iterations) {}

  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

/// Iterative solver hit its iteration cap before meeting the tolerance.
class MaxIterExceeded : public Error {
 public:
  MaxIterExceeded(int iterations, double last_change, const std::string& message)
      : Error(ErrorCode::kMaxIterExceeded, message),
        iterations_(iterations),
        last_change_(last_change) {}

  int iterations() const noexcept { return iterations_; }
  double last_change() const noexcept { return last_change_; }

 private:
  int iterations_;
  double last_change_;
};

}  // namespace spi
