#pragma once

#include <Eigen/Dense>

namespace ktmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct GainResult {
  Matrix K;  // u = K z
  Matrix riccati_P;
  double spectral_radius_AK = 0.0;
};

/// Infinite-horizon discrete LQR by Riccati value iteration.
///
/// Throws NotStabilizing if (A, B) has an uncontrollable mode on or outside
/// the unit circle or if A + BK is not Schur, and NoConvergence if the
/// iteration does not settle within `max_iter` sweeps.
GainResult dlqr(const Matrix& A, const Matrix& B, const Matrix& Q_k, const Matrix& R_k,
                double tol = 1e-10, int max_iter = 100000);

/// Largest eigenvalue modulus.
double spectral_radius(const Matrix& M);

/// Riccati residual |P - (Q + A'PA - A'PB (R + B'PB)^-1 B'PA)|_inf.
double riccati_residual(const Matrix& A, const Matrix& B, const Matrix& Q_k, const Matrix& R_k,
                        const Matrix& P);

}  // namespace ktmpc
