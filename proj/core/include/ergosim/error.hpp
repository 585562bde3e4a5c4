#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ergosim {

/// Base class for every error raised by the library. The message is prefixed
/// with the module that raised it, e.g. "poisson1d: fewer than 3 grid points".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Raised when an Euler trajectory leaves the configured blow-up ball.
class TrajectoryExploded : public Error {
 public:
  TrajectoryExploded(std::size_t step, double norm)
      : Error("euler", "trajectory exploded at step " + std::to_string(step) +
                           " (|Z| = " + std::to_string(norm) + ")"),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace ergosim
