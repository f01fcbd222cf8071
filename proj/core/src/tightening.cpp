#include "ktmpc/tightening.hpp"

#include "ktmpc/errors.hpp"

namespace ktmpc {

TighteningSchedule tighten_constraints(const HPolytope& X, const HPolytope& U,
                                       const DisturbanceModel& D, const Matrix& A, const Matrix& B,
                                       const Matrix& K, const Matrix& C_x, int N) {
  if (N < 1) throw DimensionError("tighten_constraints: horizon must be >= 1");
  const auto nz = A.rows();
  if (A.cols() != nz || B.rows() != nz || K.rows() != B.cols() || K.cols() != nz || C_x.cols() != nz)
    throw DimensionError("tighten_constraints: inconsistent A, B, K, C_x dimensions");
  if (X.dim() != C_x.rows() || U.dim() != B.cols())
    throw DimensionError("tighten_constraints: constraint set dimensions do not match the model");
  if (D.W.dim() != nz || D.V.dim() != C_x.rows())
    throw DimensionError("tighten_constraints: disturbance set dimensions do not match the model");

  const Matrix AK = A + B * K;
  TighteningSchedule s;
  s.state_sets.reserve(N + 1);
  s.input_sets.reserve(N + 1);
  s.error_sets.reserve(N);

  const HPolytope X0 = pontryagin_diff(X, D.V);
  s.state_sets.push_back(X0);
  s.input_sets.push_back(U);

  // Offsets are reduced incrementally: support functions add over Minkowski sums.
  Vector x_off = X0.offsets;
  Vector u_off = U.offsets;
  Zonotope reach = Zonotope::zero(static_cast<int>(nz));
  Zonotope term = D.W;  // A_K^(j-1) W
  for (int j = 1; j <= N; ++j) {
    reach = minkowski_sum(reach, term);
    const Zonotope cx_term = linear_map(C_x, term);
    const Zonotope k_term = linear_map(K, term);
    for (int i = 0; i < X.rows(); ++i) x_off(i) -= support(cx_term, X.normals.row(i).transpose());
    for (int i = 0; i < U.rows(); ++i) u_off(i) -= support(k_term, U.normals.row(i).transpose());
    s.state_sets.emplace_back(X.normals, x_off);
    s.input_sets.emplace_back(U.normals, u_off);
    s.error_sets.push_back(reach);
    term = linear_map(AK, term);
  }

  for (int j = 0; j <= N; ++j) {
    if (is_empty(s.state_sets[j])) throw EmptyTightenedSet(j, EmptyTightenedSet::Which::state);
    if (is_empty(s.input_sets[j])) throw EmptyTightenedSet(j, EmptyTightenedSet::Which::input);
  }
  return s;
}

}  // namespace ktmpc
