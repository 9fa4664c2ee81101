#pragma once

#include <stdexcept>
#include <string>

namespace oss {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or dimensionally inconsistent input.
class InvalidInputError : public Error {
public:
  using Error::Error;
};

/// A matrix required to be Hurwitz is not.
class StabilityAssumptionError : public Error {
public:
  StabilityAssumptionError(const std::string& what, double max_real_part)
      : Error(what), max_real_part(max_real_part) {}
  double max_real_part;
};

/// Evaluation outside the open domain of a barrier-type function.
class DomainError : public Error {
public:
  using Error::Error;
};

/// A stated precondition (convexity, rank, smoothness) does not hold.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// An iterative method ran out of its iteration budget.
class NonConvergenceError : public Error {
public:
  NonConvergenceError(const std::string& what, double last_residual, int iterations)
      : Error(what), last_residual(last_residual), iterations(iterations) {}
  double last_residual;
  int iterations;
};

/// A trajectory left the finite range of the integrator.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, double time) : Error(what), time(time) {}
  double time;
};

/// Numerical breakdown that is not a plain non-convergence (eigensolver
/// failure, near-singular pivot, ...).
class NumericError : public Error {
public:
  using Error::Error;
};

/// A linear system or program has no solution.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

/// A user-supplied gain violates its design condition.
class GainChoiceError : public Error {
public:
  using Error::Error;
};

/// An equation guaranteed solvable by construction failed to solve.
class InternalConsistencyError : public Error {
public:
  using Error::Error;
};

/// Random generation exhausted its resampling budget.
class GenerationError : public Error {
public:
  using Error::Error;
};

/// A dual synthesis solution failed its primal certificate recheck.
class CertificateMismatchError : public Error {
public:
  using Error::Error;
};

/// Scenario file violates the schema; `path` locates the offending field.
class SchemaError : public Error {
public:
  SchemaError(const std::string& what, std::string path)
      : Error(what + " (at " + path + ")"), path(std::move(path)) {}
  std::string path;
};

}  // namespace oss
