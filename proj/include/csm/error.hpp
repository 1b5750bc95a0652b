#pragma once

#include <stdexcept>
#include <string>

namespace csm {

// Argument outside the mathematical domain of an operation (bad cutoff,
// nonpositive f0, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Mismatched lengths or matrix dimensions.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Precondition on the input data not met (too short, empty, ...).
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN loss, all-invalid instantaneous frequency, and similar.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace csm
