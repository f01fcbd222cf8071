#include "ktmpc/sets.hpp"

#include "ktmpc/errors.hpp"
#include "ktmpc/qp_solver.hpp"

#include <cmath>
#include <string>

namespace ktmpc {

HPolytope::HPolytope(Matrix normals_, Vector offsets_)
    : normals(std::move(normals_)), offsets(std::move(offsets_)) {
  if (normals.rows() != offsets.size())
    throw DimensionError("HPolytope: normals has " + std::to_string(normals.rows()) +
                         " rows but offsets has " + std::to_string(offsets.size()) + " entries");
  if (!normals.allFinite() || !offsets.allFinite())
    throw DimensionError("HPolytope: non-finite entries");
  for (int i = 0; i < normals.rows(); ++i)
    if (normals.row(i).isZero(0.0))
      throw DimensionError("HPolytope: row " + std::to_string(i) + " has a zero normal");
}

HPolytope HPolytope::box(const Vector& lower, const Vector& upper) {
  if (lower.size() != upper.size()) throw DimensionError("HPolytope::box: bound sizes differ");
  const auto n = lower.size();
  Matrix normals(2 * n, n);
  normals << Matrix::Identity(n, n), -Matrix::Identity(n, n);
  Vector offsets(2 * n);
  offsets << upper, -lower;
  return {normals, offsets};
}

HPolytope HPolytope::symmetric_box(const Vector& half_widths) {
  return box(-half_widths, half_widths);
}

Zonotope::Zonotope(Vector center_, Matrix generators_)
    : center(std::move(center_)), generators(std::move(generators_)) {
  if (generators.cols() > 0 && generators.rows() != center.size())
    throw DimensionError("Zonotope: generator rows do not match center dimension");
  if (generators.cols() == 0) generators.resize(center.size(), 0);
  if (!center.allFinite() || !generators.allFinite())
    throw DimensionError("Zonotope: non-finite entries");
}

Zonotope Zonotope::singleton(const Vector& point) { return {point, Matrix(point.size(), 0)}; }

Zonotope Zonotope::zero(int dim) { return singleton(Vector::Zero(dim)); }

Zonotope Zonotope::box(const Vector& center, const Vector& half_widths) {
  if (center.size() != half_widths.size())
    throw DimensionError("Zonotope::box: center and half widths differ in size");
  if ((half_widths.array() < 0.0).any())
    throw DimensionError("Zonotope::box: negative half width");
  return {center, Matrix(half_widths.asDiagonal())};
}

Zonotope Zonotope::symmetric_box(const Vector& half_widths) {
  return box(Vector::Zero(half_widths.size()), half_widths);
}

double support(const Zonotope& z, const Eigen::Ref<const Vector>& direction) {
  if (direction.size() != z.dim()) throw DimensionError("support: direction dimension mismatch");
  double h = direction.dot(z.center);
  if (z.order() > 0) h += (direction.transpose() * z.generators).cwiseAbs().sum();
  return h;
}

Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b) {
  if (a.dim() != b.dim()) throw DimensionError("minkowski_sum: dimension mismatch");
  Matrix g(a.dim(), a.order() + b.order());
  g << a.generators, b.generators;
  return {a.center + b.center, std::move(g)};
}

Zonotope linear_map(const Eigen::Ref<const Matrix>& m, const Zonotope& z) {
  if (m.cols() != z.dim()) throw DimensionError("linear_map: matrix columns do not match set dimension");
  return {m * z.center, m * z.generators};
}

Zonotope combine_parallel_generators(const Zonotope& z, double tol) {
  std::vector<Vector> kept;
  for (int i = 0; i < z.order(); ++i) {
    Vector g = z.generators.col(i);
    const double norm = g.norm();
    if (norm <= tol) continue;
    bool merged = false;
    for (auto& k : kept) {
      const double kn = k.norm();
      const double dot = k.dot(g);
      if (std::abs(std::abs(dot) - kn * norm) <= tol * kn * norm) {
        k += (dot >= 0.0 ? 1.0 : -1.0) * g;
        merged = true;
        break;
      }
    }
    if (!merged) kept.push_back(std::move(g));
  }
  Matrix g(z.dim(), static_cast<int>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) g.col(static_cast<int>(i)) = kept[i];
  return {z.center, std::move(g)};
}

HPolytope pontryagin_diff(const HPolytope& p, const Zonotope& z) {
  if (p.dim() != z.dim()) throw DimensionError("pontryagin_diff: dimension mismatch");
  HPolytope out = p;
  for (int i = 0; i < p.rows(); ++i) out.offsets(i) -= support(z, p.normals.row(i).transpose());
  return out;
}

bool is_empty(const HPolytope& p, double tol) {
  const int n = p.dim();
  const int m = p.rows();
  if (m == 0) return false;
  // minimize s subject to a_i'x - s <= b_i, -s <= 0
  Matrix A(m + 1, n + 1);
  A.setZero();
  A.topLeftCorner(m, n) = p.normals;
  A.topRightCorner(m, 1).setConstant(-1.0);
  A(m, n) = -1.0;
  Vector b(m + 1);
  b << p.offsets, 0.0;
  Vector q = Vector::Zero(n + 1);
  q(n) = 1.0;
  const QuadraticProgram lp(Matrix::Zero(n + 1, n + 1), q, Matrix(0, n + 1), Vector(0), A, b);
  const auto sol = solve(lp);
  if (sol.status == QpStatus::primal_infeasible)
    throw Error("is_empty: slack program reported infeasible");
  return sol.x_star(n) > tol;
}

bool contains(const HPolytope& p, const Eigen::Ref<const Vector>& x, double tol) {
  if (x.size() != p.dim()) throw DimensionError("contains: point dimension mismatch");
  if (p.rows() == 0) return true;
  return ((p.normals * x - p.offsets).array() <= tol).all();
}

Vector sample(const Zonotope& z, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector xi(z.order());
  for (int i = 0; i < z.order(); ++i) xi(i) = dist(rng);
  return z.center + z.generators * xi;
}

std::pair<Vector, Vector> bounding_box(const HPolytope& p) {
  const int n = p.dim();
  Vector lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    for (int sign : {1, -1}) {
      Vector q = Vector::Zero(n);
      q(i) = sign;
      const QuadraticProgram lp(Matrix::Zero(n, n), q, Matrix(0, n), Vector(0), p.normals,
                                p.offsets);
      const auto sol = solve(lp);
      if (sol.status == QpStatus::primal_infeasible) throw Error("bounding_box: polytope is empty");
      if (sol.status != QpStatus::optimal) throw Error("bounding_box: polytope is unbounded");
      (sign > 0 ? lo : hi)(i) = sol.x_star(i);
    }
  }
  return {lo, hi};
}

std::pair<Vector, Vector> interval_hull(const Zonotope& z) {
  const Vector r = z.order() > 0 ? Vector(z.generators.cwiseAbs().rowwise().sum()) : Vector::Zero(z.dim());
  return {z.center - r, z.center + r};
}

}  // namespace ktmpc
