#pragma once

#include <Eigen/Dense>

#include <random>
#include <utility>

namespace ktmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute tolerance used by `contains`.
inline constexpr double kContainsTolerance = 1e-9;

/// Halfspace representation {x : normals * x <= offsets}.
struct HPolytope {
  Matrix normals;
  Vector offsets;

  HPolytope() = default;
  HPolytope(Matrix normals, Vector offsets);

  int dim() const { return static_cast<int>(normals.cols()); }
  int rows() const { return static_cast<int>(normals.rows()); }

  /// Axis-aligned box [lower, upper] with rows +e_i then -e_i.
  static HPolytope box(const Vector& lower, const Vector& upper);
  static HPolytope symmetric_box(const Vector& half_widths);
};

/// Zonotope {center + generators * xi : |xi|_inf <= 1}.
struct Zonotope {
  Vector center;
  Matrix generators;  // n x g, g = 0 is a singleton

  Zonotope() = default;
  Zonotope(Vector center, Matrix generators);

  int dim() const { return static_cast<int>(center.size()); }
  int order() const { return static_cast<int>(generators.cols()); }

  static Zonotope singleton(const Vector& point);
  static Zonotope zero(int dim);
  /// Box centered at `center` with half widths `half_widths` (diagonal generators).
  static Zonotope box(const Vector& center, const Vector& half_widths);
  static Zonotope symmetric_box(const Vector& half_widths);
};

/// h_Z(a) = a'c + sum_i |a'g_i|.
double support(const Zonotope& z, const Eigen::Ref<const Vector>& direction);

Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b);
Zonotope linear_map(const Eigen::Ref<const Matrix>& m, const Zonotope& z);

/// Merges parallel generators and drops zero ones. The set is unchanged.
Zonotope combine_parallel_generators(const Zonotope& z, double tol = 1e-12);

/// Exact P (-) Z: same normals, offsets reduced by the support of Z.
HPolytope pontryagin_diff(const HPolytope& p, const Zonotope& z);

/// Feasibility test through a slack LP; true iff no point satisfies every row.
bool is_empty(const HPolytope& p, double tol = 1e-9);

bool contains(const HPolytope& p, const Eigen::Ref<const Vector>& x,
              double tol = kContainsTolerance);

/// Uniform in the generator cube, mapped through the zonotope.
Vector sample(const Zonotope& z, std::mt19937_64& rng);

/// Componentwise bounds of the polytope, computed by 2n LPs. Throws if unbounded or empty.
std::pair<Vector, Vector> bounding_box(const HPolytope& p);

/// Interval hull of a zonotope.
std::pair<Vector, Vector> interval_hull(const Zonotope& z);

}  // namespace ktmpc
