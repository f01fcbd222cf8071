#pragma once

#include <stdexcept>
#include <string>

namespace ktmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input (files, JSON, CSV).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Least-squares fit has fewer independent samples than unknowns.
class UnderdeterminedFit : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  explicit NoConvergence(int max_iter)
      : Error("Riccati iteration did not converge in " + std::to_string(max_iter) +
              " iterations"),
        max_iter(max_iter) {}
  int max_iter;
};

class NotStabilizing : public Error {
 public:
  using Error::Error;
};

/// Quadratic program with an indefinite Hessian.
class NonConvex : public Error {
 public:
  using Error::Error;
};

/// A tightened constraint set of the schedule is empty.
class EmptyTightenedSet : public Error {
 public:
  enum class Which { state, input };

  EmptyTightenedSet(int index, Which which)
      : Error(std::string(which == Which::state ? "tightened state set X~(" : "tightened input set U~(") +
              std::to_string(index) + ") is empty"),
        index(index),
        which(which) {}

  int index;
  Which which;
};

/// The steady-state target problem has no feasible point.
class InfeasibleSteadyState : public Error {
 public:
  using Error::Error;
};

/// The tracking MPC problem is infeasible at the current state.
class InfeasibleProblem : public Error {
 public:
  using Error::Error;
};

}  // namespace ktmpc
