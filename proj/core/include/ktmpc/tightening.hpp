#pragma once

#include "ktmpc/koopman_model.hpp"
#include "ktmpc/sets.hpp"

#include <vector>

namespace ktmpc {

/// Tightened constraints along the horizon. All state sets share the normals
/// of X and all input sets share the normals of U.
struct TighteningSchedule {
  std::vector<HPolytope> state_sets;  // X~(0..N)
  std::vector<HPolytope> input_sets;  // U~(0..N)
  std::vector<Zonotope> error_sets;   // R(1..N)

  int horizon() const { return static_cast<int>(state_sets.size()) - 1; }
};

/// X~(0) = X (-) V, U~(0) = U and for j >= 1
///   R(j) = R(j-1) (+) A_K^(j-1) W,  X~(j) = X (-) (C_x R(j) (+) V),  U~(j) = U (-) K R(j).
/// Throws EmptyTightenedSet for the first empty set (state sets checked first at each j).
TighteningSchedule tighten_constraints(const HPolytope& X, const HPolytope& U,
                                       const DisturbanceModel& D, const Matrix& A, const Matrix& B,
                                       const Matrix& K, const Matrix& C_x, int N);

}  // namespace ktmpc
