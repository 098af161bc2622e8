// Exception types shared across the opfdd library.
#pragma once

#include <stdexcept>
#include <string>

namespace opfdd {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised by the case-file reader: missing block, ragged matrix row,
// unparsable token, or a network that fails structural validation.
class MalformedCase : public Error {
 public:
  using Error::Error;
};

// Raised when a generator cost row uses a model other than polynomial of
// degree <= 2 (e.g. piecewise linear).
class UnsupportedCostModel : public MalformedCase {
 public:
  using MalformedCase::MalformedCase;
};

// Raised when a generator or branch references a bus id that does not exist.
class DanglingReference : public MalformedCase {
 public:
  using MalformedCase::MalformedCase;
};

// Raised by the JSON reader; the message carries the JSON path of the
// offending element.
class SchemaViolation : public Error {
 public:
  using Error::Error;
};

// Raised by the NLP engine when the starting point is non-finite or the
// variable bounds are inconsistent (lower > upper).
class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

// Raised when a generator cost has negative quadratic coefficient: the
// dispatch subproblems would lose their unique closed-form minimizer.
class NonconvexQuadratic : public Error {
 public:
  using Error::Error;
};

// Raised when a bus subproblem has non-positive curvature in the voltage
// coordinate (the shunt-multiplier term overwhelms the regularization), so
// its unconstrained minimum does not exist.
class NonCoerciveBus : public Error {
 public:
  using Error::Error;
};

}  // namespace opfdd
