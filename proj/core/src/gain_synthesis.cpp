#include "ktmpc/gain_synthesis.hpp"

#include "ktmpc/errors.hpp"

#include <Eigen/Eigenvalues>

#include <complex>

namespace ktmpc {

namespace {

void require_spd(const Matrix& M, const char* name) {
  if (M.rows() != M.cols()) throw DimensionError(std::string(name) + " must be square");
  const Eigen::LLT<Matrix> llt(0.5 * (M + M.transpose()));
  if (llt.info() != Eigen::Success || (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + M.cwiseAbs().maxCoeff()))
    throw DimensionError(std::string(name) + " must be symmetric positive definite");
}

// PBH test: rank [A - lambda I, B] = n for every eigenvalue with |lambda| >= 1.
bool stabilizable(const Matrix& A, const Matrix& B) {
  const int n = static_cast<int>(A.rows());
  const Eigen::EigenSolver<Matrix> es(A, false);
  for (int i = 0; i < n; ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (std::abs(lambda) < 1.0 - 1e-12) continue;
    Eigen::MatrixXcd pbh(n, n + B.cols());
    pbh.leftCols(n) = A.cast<std::complex<double>>() - lambda * Eigen::MatrixXcd::Identity(n, n);
    pbh.rightCols(B.cols()) = B.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pbh);
    const auto& sv = svd.singularValues();
    const double scale = std::max(1.0, sv(0));
    if (sv.size() < n || sv(n - 1) <= 1e-10 * scale) return false;
  }
  return true;
}

Matrix riccati_step(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& P) {
  const Matrix BtP = B.transpose() * P;
  const Matrix S = R + BtP * B;
  const Matrix next = Q + A.transpose() * P * A - A.transpose() * BtP.transpose() * S.ldlt().solve(BtP * A);
  return 0.5 * (next + next.transpose());
}

}  // namespace

double spectral_radius(const Matrix& M) {
  if (M.rows() != M.cols()) throw DimensionError("spectral_radius: matrix must be square");
  if (M.size() == 0) return 0.0;
  const Eigen::EigenSolver<Matrix> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double riccati_residual(const Matrix& A, const Matrix& B, const Matrix& Q_k, const Matrix& R_k,
                        const Matrix& P) {
  return (P - riccati_step(A, B, Q_k, R_k, P)).cwiseAbs().maxCoeff();
}

GainResult dlqr(const Matrix& A, const Matrix& B, const Matrix& Q_k, const Matrix& R_k, double tol,
                int max_iter) {
  const auto n = A.rows();
  if (A.cols() != n || B.rows() != n) throw DimensionError("dlqr: A must be n x n and B n x m");
  if (Q_k.rows() != n) throw DimensionError("dlqr: Q_k must be n x n");
  if (R_k.rows() != B.cols()) throw DimensionError("dlqr: R_k must be m x m");
  require_spd(Q_k, "dlqr: Q_k");
  require_spd(R_k, "dlqr: R_k");
  if (!stabilizable(A, B)) throw NotStabilizing("dlqr: (A, B) is not stabilizable");

  Matrix P = Q_k;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Matrix next = riccati_step(A, B, Q_k, R_k, P);
    const double delta = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (!P.allFinite()) break;
    if (delta <= tol || delta <= 1e-14 * P.cwiseAbs().maxCoeff()) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NoConvergence(max_iter);

  GainResult g;
  const Matrix BtP = B.transpose() * P;
  g.K = -(R_k + BtP * B).ldlt().solve(BtP * A);
  g.riccati_P = P;
  g.spectral_radius_AK = spectral_radius(A + B * g.K);
  if (g.spectral_radius_AK >= 1.0)
    throw NotStabilizing("dlqr: closed loop spectral radius " + std::to_string(g.spectral_radius_AK) + " >= 1");
  return g;
}

}  // namespace ktmpc
