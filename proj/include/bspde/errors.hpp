#pragma once

#include <stdexcept>
#include <string>

namespace bspde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A discrete object would exceed its configured size budget.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Argument dimensions do not match.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Child values cannot be reproduced from their conditional mean and the
/// Brownian increments; the input was not adapted to the tree.
class RepresentationError : public Error {
 public:
  using Error::Error;
};

/// A structural condition on the coefficients (coercivity, positivity of the
/// residual diffusion, solvability of an implicit step) does not hold.
class ConditionError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain an operation accepts.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// (I - Q) is numerically singular.
class FredholmError : public Error {
 public:
  FredholmError(const std::string& what, double condition_number, double nearest_eigenvalue_distance)
      : Error(what), condition_number_(condition_number), nearest_distance_(nearest_eigenvalue_distance) {}

  double condition_number() const noexcept { return condition_number_; }
  /// Distance from 1 to the closest eigenvalue of Q (NaN when not computed).
  double nearest_eigenvalue_distance() const noexcept { return nearest_distance_; }

 private:
  double condition_number_;
  double nearest_distance_;
};

/// The requested iterative method cannot be used or did not converge.
class MethodError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bspde
