#pragma once

#include <stdexcept>
#include <string>

namespace mbsde {

/// A computation ran but its numerics cannot be trusted (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sample moments keep growing with the sample size.
class DivergingMomentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Importance weights collapsed onto a few paths.
class DegeneracyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace mbsde
