#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string_view>

namespace ktmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// minimize 1/2 x'Px + q'x + constant
/// subject to A_eq x = b_eq, A_in x <= b_in.
struct QuadraticProgram {
  Matrix P;
  Vector q;
  Matrix A_eq;
  Vector b_eq;
  Matrix A_in;
  Vector b_in;
  double constant = 0.0;

  QuadraticProgram() = default;
  /// Symmetrizes P and checks dimensions.
  QuadraticProgram(Matrix P, Vector q, Matrix A_eq, Vector b_eq, Matrix A_in, Vector b_in,
                   double constant = 0.0);

  int num_variables() const { return static_cast<int>(q.size()); }
  int num_equalities() const { return static_cast<int>(b_eq.size()); }
  int num_inequalities() const { return static_cast<int>(b_in.size()); }

  double objective(const Eigen::Ref<const Vector>& x) const;
  void validate() const;
};

enum class QpStatus { optimal, primal_infeasible, max_iterations };

std::string_view to_string(QpStatus status);

struct KktResiduals {
  double stationarity = 0.0;
  double primal_eq = 0.0;
  double primal_in = 0.0;
  double complementarity = 0.0;
  /// Most negative inequality multiplier (0 when all are nonnegative).
  double dual_infeasibility = 0.0;

  double max() const;
};

struct QpSolution {
  Vector x_star;
  double objective = 0.0;
  QpStatus status = QpStatus::max_iterations;
  KktResiduals kkt;
  Vector eq_multipliers;
  Vector in_multipliers;
  int outer_iterations = 0;
};

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 200;
  /// Proximal weight relative to max(1, max |P_ii|); used only when P is singular.
  double proximal_weight = 1e-5;
};

/// KKT residuals of an arbitrary primal-dual point.
KktResiduals kkt_residuals(const QuadraticProgram& qp, const Vector& x, const Vector& eq_mult,
                           const Vector& in_mult);

/// Solves a convex QP with a dual active-set method. A singular P is handled
/// by proximal-point iterations; every iterate is polished by an exact KKT
/// solve on the identified active set.
///
/// Throws NonConvex if P has a negative pivot in its LDL' factorization and
/// DimensionError on inconsistent data. `warm_start` only seeds the proximal
/// center and never changes the answer beyond the tolerance.
QpSolution solve(const QuadraticProgram& qp, const QpSettings& settings = {},
                 const std::optional<Vector>& warm_start = std::nullopt);

}  // namespace ktmpc
