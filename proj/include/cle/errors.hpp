#pragma once

#include <stdexcept>
#include <string>

namespace cle {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad network, bad grid, bad config file, unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A state was evaluated outside the domain of its chart (e.g. x <= 0 in a log chart).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Two fields, histograms or solutions do not share a grid.
class GridMismatchError : public Error {
 public:
  using Error::Error;
};

/// An iterative or direct solve failed; carries the last residual.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Every trajectory of an ensemble died, or a sample set was empty.
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cle
