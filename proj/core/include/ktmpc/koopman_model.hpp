#pragma once

#include "ktmpc/lifting.hpp"
#include "ktmpc/sets.hpp"

#include <vector>

namespace ktmpc {

/// Lifted linear predictor z+ = A z + B u, x = C_x z, y = C_y z.
class KoopmanModel {
 public:
  KoopmanModel(Matrix A, Matrix B, Matrix C_x, Matrix C_y, Lifting lifting);

  /// Builds C_x = [I, 0] and C_y = C * C_x.
  static KoopmanModel with_output(Matrix A, Matrix B, const Matrix& C, Lifting lifting);

  int state_dim() const { return static_cast<int>(C_x_.rows()); }
  int input_dim() const { return static_cast<int>(B_.cols()); }
  int output_dim() const { return static_cast<int>(C_y_.rows()); }
  int lifted_dim() const { return static_cast<int>(A_.rows()); }

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& C_x() const { return C_x_; }
  const Matrix& C_y() const { return C_y_; }
  const Lifting& lifting() const { return lifting_; }

  Vector lift(const Eigen::Ref<const Vector>& x) const;
  Vector predict(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& u) const;
  Vector decode(const Eigen::Ref<const Vector>& z) const;
  Vector output(const Eigen::Ref<const Vector>& z) const;

 private:
  Matrix A_, B_, C_x_, C_y_;
  Lifting lifting_;
};

struct Trajectory {
  std::vector<Vector> states;  // x(0..L)
  std::vector<Vector> inputs;  // u(0..L-1)
};

struct TrajectoryData {
  std::vector<Trajectory> trajectories;

  int state_dim() const;
  int input_dim() const;
  long transitions() const;
  /// Throws DimensionError on inconsistent lengths or sizes.
  void validate() const;
};

/// Lifted-space disturbance W and state-space measurement disturbance V.
struct DisturbanceModel {
  Zonotope W;
  Zonotope V;

  static DisturbanceModel none(int lifted_dim, int state_dim);
};

/// Least squares for [A B] over all transitions with Tikhonov weight `ridge`.
/// `C` is the plant output matrix (n_y x n_x).
KoopmanModel fit_edmd(const TrajectoryData& data, const Lifting& lifting, const Matrix& C,
                      double ridge = 1e-8);

/// Sum of squared one-step lifted residuals, the quantity fit_edmd minimizes without the ridge term.
double edmd_residual(const TrajectoryData& data, const Lifting& lifting, const Matrix& A,
                     const Matrix& B);

/// Axis-aligned boxes covering all one-step residuals and the origin, generators scaled by `inflation`.
DisturbanceModel estimate_disturbance_sets(const KoopmanModel& model, const TrajectoryData& data,
                                           double inflation = 1.0);

}  // namespace ktmpc
