#include "ktmpc/koopman_model.hpp"

#include "ktmpc/errors.hpp"

#include <cmath>
#include <string>

namespace ktmpc {

KoopmanModel::KoopmanModel(Matrix A, Matrix B, Matrix C_x, Matrix C_y, Lifting lifting)
    : A_(std::move(A)),
      B_(std::move(B)),
      C_x_(std::move(C_x)),
      C_y_(std::move(C_y)),
      lifting_(std::move(lifting)) {
  const auto nz = A_.rows();
  if (A_.cols() != nz) throw DimensionError("KoopmanModel: A must be square");
  if (B_.rows() != nz) throw DimensionError("KoopmanModel: B rows must equal n_z");
  if (C_x_.cols() != nz) throw DimensionError("KoopmanModel: C_x columns must equal n_z");
  if (C_y_.cols() != nz) throw DimensionError("KoopmanModel: C_y columns must equal n_z");
  if (lifting_.lifted_dim() != nz)
    throw DimensionError("KoopmanModel: lifting dimension " + std::to_string(lifting_.lifted_dim()) +
                         " does not match n_z = " + std::to_string(nz));
  if (lifting_.state_dim() != C_x_.rows())
    throw DimensionError("KoopmanModel: C_x rows must equal the lifting state dimension");
}

KoopmanModel KoopmanModel::with_output(Matrix A, Matrix B, const Matrix& C, Lifting lifting) {
  const int nx = lifting.state_dim();
  const int nz = lifting.lifted_dim();
  if (C.cols() != nx) throw DimensionError("KoopmanModel: output matrix C must have n_x columns");
  Matrix Cx = Matrix::Zero(nx, nz);
  Cx.leftCols(nx).setIdentity();
  Matrix Cy = C * Cx;
  return {std::move(A), std::move(B), std::move(Cx), std::move(Cy), std::move(lifting)};
}

Vector KoopmanModel::lift(const Eigen::Ref<const Vector>& x) const { return lifting_(x); }

Vector KoopmanModel::predict(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& u) const {
  if (z.size() != lifted_dim() || u.size() != input_dim())
    throw DimensionError("predict: dimension mismatch");
  return A_ * z + B_ * u;
}

Vector KoopmanModel::decode(const Eigen::Ref<const Vector>& z) const {
  if (z.size() != lifted_dim()) throw DimensionError("decode: dimension mismatch");
  return C_x_ * z;
}

Vector KoopmanModel::output(const Eigen::Ref<const Vector>& z) const {
  if (z.size() != lifted_dim()) throw DimensionError("output: dimension mismatch");
  return C_y_ * z;
}

int TrajectoryData::state_dim() const {
  for (const auto& t : trajectories)
    if (!t.states.empty()) return static_cast<int>(t.states.front().size());
  return 0;
}

int TrajectoryData::input_dim() const {
  for (const auto& t : trajectories)
    if (!t.inputs.empty()) return static_cast<int>(t.inputs.front().size());
  return 0;
}

long TrajectoryData::transitions() const {
  long n = 0;
  for (const auto& t : trajectories) n += static_cast<long>(t.inputs.size());
  return n;
}

void TrajectoryData::validate() const {
  const int nx = state_dim();
  const int nu = input_dim();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    if (t.states.size() != t.inputs.size() + 1)
      throw DimensionError("trajectory " + std::to_string(i) + ": expected one more state than inputs");
    for (const auto& x : t.states)
      if (x.size() != nx) throw DimensionError("trajectory " + std::to_string(i) + ": state size mismatch");
    for (const auto& u : t.inputs)
      if (u.size() != nu) throw DimensionError("trajectory " + std::to_string(i) + ": input size mismatch");
  }
}

DisturbanceModel DisturbanceModel::none(int lifted_dim, int state_dim) {
  return {Zonotope::zero(lifted_dim), Zonotope::zero(state_dim)};
}

namespace {

// Regressor rows [psi(x_k)' u_k'] and targets psi(x_{k+1})'.
void assemble(const TrajectoryData& data, const Lifting& lifting, Matrix& phi, Matrix& target) {
  const int nz = lifting.lifted_dim();
  const int nu = data.input_dim();
  const long T = data.transitions();
  phi.resize(T, nz + nu);
  target.resize(T, nz);
  long row = 0;
  for (const auto& t : data.trajectories) {
    if (t.states.empty()) continue;
    Vector z = lifting(t.states[0]);
    for (std::size_t k = 0; k < t.inputs.size(); ++k) {
      Vector zn = lifting(t.states[k + 1]);
      phi.row(row).head(nz) = z.transpose();
      phi.row(row).tail(nu) = t.inputs[k].transpose();
      target.row(row) = zn.transpose();
      z = std::move(zn);
      ++row;
    }
  }
}

}  // namespace

KoopmanModel fit_edmd(const TrajectoryData& data, const Lifting& lifting, const Matrix& C,
                      double ridge) {
  data.validate();
  if (ridge < 0.0) throw DimensionError("fit_edmd: ridge must be nonnegative");
  if (data.state_dim() != lifting.state_dim())
    throw DimensionError("fit_edmd: data state dimension does not match the lifting");
  const int nz = lifting.lifted_dim();
  const int nu = data.input_dim();
  const long T = data.transitions();
  if (T < nz + nu)
    throw UnderdeterminedFit("fit_edmd: " + std::to_string(T) + " transitions for " +
                             std::to_string(nz + nu) + " regressors");

  Matrix phi, target;
  assemble(data, lifting, phi, target);
  const int p = nz + nu;
  Matrix lhs(T + (ridge > 0.0 ? p : 0), p);
  Matrix rhs(lhs.rows(), nz);
  lhs.topRows(T) = phi;
  rhs.topRows(T) = target;
  if (ridge > 0.0) {
    lhs.bottomRows(p) = std::sqrt(ridge) * Matrix::Identity(p, p);
    rhs.bottomRows(p).setZero();
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
  if (qr.rank() < p)
    throw UnderdeterminedFit("fit_edmd: regressor matrix has rank " + std::to_string(qr.rank()) +
                             " < " + std::to_string(p));
  const Matrix theta = qr.solve(rhs).transpose();  // nz x (nz + nu)
  return KoopmanModel::with_output(theta.leftCols(nz), theta.rightCols(nu), C, lifting);
}

double edmd_residual(const TrajectoryData& data, const Lifting& lifting, const Matrix& A,
                     const Matrix& B) {
  Matrix phi, target;
  assemble(data, lifting, phi, target);
  Matrix theta(A.rows(), A.cols() + B.cols());
  theta << A, B;
  return (phi * theta.transpose() - target).squaredNorm();
}

DisturbanceModel estimate_disturbance_sets(const KoopmanModel& model, const TrajectoryData& data,
                                           double inflation) {
  data.validate();
  if (data.transitions() == 0) throw InputError("estimate_disturbance_sets: no transitions in data");
  if (inflation < 1.0) throw DimensionError("estimate_disturbance_sets: inflation must be >= 1");
  const int nz = model.lifted_dim();
  const int nx = model.state_dim();
  Vector wlo = Vector::Zero(nz), whi = Vector::Zero(nz);
  Vector vlo = Vector::Zero(nx), vhi = Vector::Zero(nx);
  for (const auto& t : data.trajectories) {
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      const Vector z = model.lift(t.states[k]);
      const Vector v = t.states[k] - model.decode(z);
      vlo = vlo.cwiseMin(v);
      vhi = vhi.cwiseMax(v);
      if (k < t.inputs.size()) {
        const Vector w = model.lift(t.states[k + 1]) - model.predict(z, t.inputs[k]);
        wlo = wlo.cwiseMin(w);
        whi = whi.cwiseMax(w);
      }
    }
  }
  auto make = [inflation](const Vector& lo, const Vector& hi) {
    return Zonotope::box(0.5 * (lo + hi), 0.5 * inflation * (hi - lo));
  };
  return {make(wlo, whi), make(vlo, vhi)};
}

}  // namespace ktmpc
