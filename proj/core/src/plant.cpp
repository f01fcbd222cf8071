#include "ktmpc/plant.hpp"

#include "ktmpc/errors.hpp"

#include <cmath>
#include <limits>

namespace ktmpc {

Plant::Plant(Kind kind) : kind_(kind) {
  if (const auto* u = std::get_if<Unicycle>(&kind_)) {
    if (!(u->dt > 0.0)) throw DimensionError("unicycle: dt must be positive");
    C_ = Matrix::Zero(2, 3);
    C_.leftCols(2).setIdentity();
  } else {
    C_ = Matrix(1, 2);
    C_ << 0.0, 1.0;
  }
}

int Plant::state_dim() const { return std::holds_alternative<Unicycle>(kind_) ? 3 : 2; }
int Plant::input_dim() const { return std::holds_alternative<Unicycle>(kind_) ? 2 : 1; }

Vector Plant::f(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
  if (x.size() != state_dim() || u.size() != input_dim()) throw DimensionError("plant: dimension mismatch");
  Vector next(x.size());
  if (const auto* p = std::get_if<NumericalExample>(&kind_)) {
    next(0) = p->lambda * x(0);
    next(1) = p->mu * x(1) + (p->lambda * p->lambda - p->mu) * x(0) * x(0) + u(0);
  } else {
    const double dt = std::get<Unicycle>(kind_).dt;
    next(0) = x(0) + dt * u(0) * std::cos(x(2));
    next(1) = x(1) + dt * u(0) * std::sin(x(2));
    next(2) = x(2) + dt * u(1);
  }
  return next;
}

bool Plant::has_exact_lifting() const { return std::holds_alternative<NumericalExample>(kind_); }

Lifting Plant::exact_lifting() const {
  if (!has_exact_lifting()) throw Error("plant has no exact finite lifting");
  return {2, ExplicitLifting{{{2, 0}}}};
}

KoopmanModel Plant::exact_model() const {
  const auto& p = std::get<NumericalExample>(kind_);
  const double l2 = p.lambda * p.lambda;
  Matrix A(3, 3);
  A << p.lambda, 0.0, 0.0,
       0.0, p.mu, l2 - p.mu,
       0.0, 0.0, l2;
  Matrix B(3, 1);
  B << 0.0, 1.0, 0.0;
  return KoopmanModel::with_output(A, B, C_, exact_lifting());
}

Vector step_lifted(const Plant& plant, const Vector& z, const Vector& u, const Vector& w) {
  const KoopmanModel m = plant.exact_model();
  Vector next = m.predict(z, u);
  if (w.size() > 0) next += w;
  return next;
}

PlantStep step_plant(const Plant& plant, const Vector& x, const Vector& u, std::mt19937_64* rng,
                     const Zonotope* W, const Zonotope* V) {
  PlantStep out;
  if (!plant.has_exact_lifting()) {
    out.x_next = plant.f(x, u);
  } else {
    const KoopmanModel m = plant.exact_model();
    if (x.size() != m.state_dim() || u.size() != m.input_dim()) throw DimensionError("plant: dimension mismatch");
    Vector z = m.predict(m.lift(x), u);
    if (W && rng) {
      out.w = sample(*W, *rng);
      z += out.w;
    }
    out.x_next = m.decode(z);
    if (V && rng) {
      out.v = sample(*V, *rng);
      out.x_next += out.v;
    }
  }
  out.y = plant.output(out.x_next);
  return out;
}

NonlinearSteady solve_steady_nonlinear(const Plant& plant, const Vector& y_t, double s,
                                       const SteadyGrid& grid) {
  const int nx = plant.state_dim();
  const int nu = plant.input_dim();
  if (grid.x_lower.size() != nx || grid.x_upper.size() != nx || grid.u_lower.size() != nu ||
      grid.u_upper.size() != nu)
    throw DimensionError("steady grid: bound dimensions do not match the plant");
  if (y_t.size() != plant.output_dim()) throw DimensionError("steady grid: reference dimension mismatch");
  const int dims = nx + nu;
  std::vector<int> pts(dims);
  for (int i = 0; i < dims; ++i) {
    pts[i] = grid.points.size() == 1 ? grid.points[0] : grid.points.at(i);
    if (pts[i] < 1) throw DimensionError("steady grid: need at least one point per coordinate");
  }
  Vector lo(dims), hi(dims);
  lo << grid.x_lower, grid.u_lower;
  hi << grid.x_upper, grid.u_upper;

  auto coord = [&](int d, int i) {
    return pts[d] == 1 ? 0.5 * (lo(d) + hi(d)) : lo(d) + (hi(d) - lo(d)) * i / (pts[d] - 1);
  };

  std::vector<int> idx(dims, 0);
  Vector x(nx), u(nu);
  NonlinearSteady best;
  best.J_eq = std::numeric_limits<double>::infinity();
  for (;;) {
    for (int d = 0; d < nx; ++d) x(d) = coord(d, idx[d]);
    for (int d = 0; d < nu; ++d) u(d) = coord(nx + d, idx[nx + d]);
    if ((plant.f(x, u) - x).lpNorm<Eigen::Infinity>() <= grid.fp_tol) {
      const Vector y = plant.output(x);
      const double J = s * (y - y_t).squaredNorm();
      if (J < best.J_eq) best = {x, u, y, J};
    }
    int d = dims - 1;
    while (d >= 0 && ++idx[d] == pts[d]) idx[d--] = 0;
    if (d < 0) break;
  }
  if (!std::isfinite(best.J_eq)) throw Error("steady grid: no fixed point found on the grid");
  return best;
}

}  // namespace ktmpc
