#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace abcsmooth {

/// Model parameters outside their domain (non-positive variances, wrong dimensions).
class InvalidModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A call made outside an operation's precondition (size mismatch, missing data).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Every particle weight is zero at `time()`.
class DegenerateWeightsError : public std::runtime_error {
 public:
  DegenerateWeightsError(std::size_t time, const std::string& what)
      : std::runtime_error(what + " (time " + std::to_string(time) + ")"), time_(time) {}

  [[nodiscard]] std::size_t time() const noexcept { return time_; }

 private:
  std::size_t time_;
};

/// The backward kernel of the forward-only smoother has no mass for some particle.
class DegenerateBackwardKernelError : public std::runtime_error {
 public:
  DegenerateBackwardKernelError(std::size_t time, std::size_t particle)
      : std::runtime_error("backward kernel vanished at time " + std::to_string(time) +
                           " for particle " + std::to_string(particle)),
        time_(time),
        particle_(particle) {}

  [[nodiscard]] std::size_t time() const noexcept { return time_; }
  [[nodiscard]] std::size_t particle() const noexcept { return particle_; }

 private:
  std::size_t time_;
  std::size_t particle_;
};

/// A quadrature oracle failed its own refinement check.
class AccuracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Even the largest tolerance on the calibration grid degenerated.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unresolvable experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An output destination could not be created or written.
class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace abcsmooth
