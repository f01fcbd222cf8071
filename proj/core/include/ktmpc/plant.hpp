#pragma once

#include "ktmpc/koopman_model.hpp"
#include "ktmpc/sets.hpp"

#include <optional>
#include <random>
#include <variant>

namespace ktmpc {

/// x1+ = lambda x1, x2+ = mu x2 + (lambda^2 - mu) x1^2 + u, y = x2.
struct NumericalExample {
  double lambda = -0.1;
  double mu = 2.0;
};

/// Euler-discretized kinematic unicycle, x = (p_x, p_y, theta), u = (v, omega), y = (p_x, p_y).
struct Unicycle {
  double dt = 0.1;
};

class Plant {
 public:
  using Kind = std::variant<NumericalExample, Unicycle>;

  explicit Plant(Kind kind);
  static Plant numerical_example(double lambda = -0.1, double mu = 2.0) { return Plant(NumericalExample{lambda, mu}); }
  static Plant unicycle(double dt = 0.1) { return Plant(Unicycle{dt}); }

  const Kind& kind() const { return kind_; }
  int state_dim() const;
  int input_dim() const;
  int output_dim() const { return static_cast<int>(C_.rows()); }
  const Matrix& C() const { return C_; }

  /// Nominal dynamics x+ = f(x, u).
  Vector f(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const;
  Vector output(const Eigen::Ref<const Vector>& x) const { return C_ * x; }

  /// True when the plant is itself a lifted linear system (disturbances act on z).
  bool has_exact_lifting() const;
  /// psi(x) = (x1, x2, x1^2) for the numerical example.
  Lifting exact_lifting() const;
  /// Exact lifted model of the numerical example. Throws for the unicycle.
  KoopmanModel exact_model() const;

 private:
  Kind kind_;
  Matrix C_;
};

struct PlantStep {
  Vector x_next;
  Vector y;
  Vector w;  // injected lifted disturbance (empty when none)
  Vector v;  // injected measurement disturbance (empty when none)
};

/// One step from state x. For the numerical example z = psi(x) is propagated
/// through the exact lifted model with w drawn from W and x+ = C_x z+ + v with
/// v drawn from V. The unicycle ignores W and V.
PlantStep step_plant(const Plant& plant, const Vector& x, const Vector& u,
                     std::mt19937_64* rng = nullptr, const Zonotope* W = nullptr,
                     const Zonotope* V = nullptr);

/// Lifted-state propagation z+ = A z + B u + w of the numerical example.
Vector step_lifted(const Plant& plant, const Vector& z, const Vector& u, const Vector& w);

struct SteadyGrid {
  Vector x_lower, x_upper;
  Vector u_lower, u_upper;
  /// Grid points per coordinate; a single value applies to every coordinate.
  std::vector<int> points{41};
  double fp_tol = 1e-9;
};

struct NonlinearSteady {
  Vector x_sr;
  Vector u_sr;
  Vector y_sr;
  double J_eq = 0.0;
};

/// Brute-force search of the grid for fixed points |f(x,u) - x|_inf <= fp_tol
/// that minimize s |Cx - y_t|^2. Throws Error when the grid has no fixed point.
NonlinearSteady solve_steady_nonlinear(const Plant& plant, const Vector& y_t, double s,
                                       const SteadyGrid& grid);

}  // namespace ktmpc
