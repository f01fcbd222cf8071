#pragma once

#include "ktmpc/koopman_model.hpp"
#include "ktmpc/qp_solver.hpp"
#include "ktmpc/tightening.hpp"

#include <optional>
#include <vector>

namespace ktmpc {

struct KtmpcConfig {
  int N = 10;
  Matrix Q;      // n_z x n_z, positive definite
  Matrix R;      // n_u x n_u, positive definite
  double s = 100.0;  // offset weight S = s I
  Matrix K;      // tube gain, n_u x n_z

  void validate(int lifted_dim, int input_dim) const;
};

struct SteadyTarget {
  Vector z_s;
  Vector u_s;
  Vector y_s;
  double offset_cost = 0.0;  // s |y_s - y_t|^2
};

struct KtmpcSolution {
  std::vector<Vector> u_bar;  // u(0..N-1)
  std::vector<Vector> z_bar;  // z(0..N)
  SteadyTarget target;
  double total_cost = 0.0;
  QpStatus qp_status = QpStatus::max_iterations;
  KktResiduals kkt;
  Vector decision;  // stacked [u(0..N-1); z(1..N); z_s; u_s]
};

struct LyapunovDiag {
  double V1 = 0.0;
  double V2 = 0.0;
  double J_eq_tilde = 0.0;
};

/// Best reachable steady pair on the model's steady manifold inside X~(N), U~(N).
/// Throws InfeasibleSteadyState when no steady pair satisfies the constraints.
SteadyTarget solve_steady_offline(const KoopmanModel& model, const TighteningSchedule& schedule,
                                  const Vector& y_t, double s);

/// Problem data for one step with z(0) = psi(x_k).
QuadraticProgram build_qp(const KoopmanModel& model, const KtmpcConfig& config,
                          const TighteningSchedule& schedule, const Vector& x_k, const Vector& y_t);

/// Same as build_qp with the initial lifted state given directly.
QuadraticProgram build_qp_lifted(const KoopmanModel& model, const KtmpcConfig& config,
                                 const TighteningSchedule& schedule, const Vector& z0,
                                 const Vector& y_t);

/// Offsets of the decision blocks inside the stacked QP variable.
struct DecisionLayout {
  int N, nz, nu;
  int u(int j) const { return j * nu; }
  int z(int j) const { return N * nu + (j - 1) * nz; }  // j = 1..N
  int z_s() const { return N * nu + N * nz; }
  int u_s() const { return z_s() + nz; }
  int size() const { return u_s() + nu; }
};

/// Solves one step. Throws InfeasibleProblem when the QP is infeasible and
/// Error when the solver fails to certify a solution.
KtmpcSolution solve_step(const KoopmanModel& model, const KtmpcConfig& config,
                         const TighteningSchedule& schedule, const Vector& x_k, const Vector& y_t,
                         const std::optional<Vector>& warm_start = std::nullopt);

KtmpcSolution solve_step_lifted(const KoopmanModel& model, const KtmpcConfig& config,
                                const TighteningSchedule& schedule, const Vector& z0,
                                const Vector& y_t,
                                const std::optional<Vector>& warm_start = std::nullopt);

LyapunovDiag diagnostics(const KtmpcSolution& solution, const SteadyTarget& offline,
                         const KtmpcConfig& config);

struct CandidateReport {
  std::vector<Vector> u_bar;
  std::vector<Vector> z_bar;
  Vector z_s;
  Vector u_s;
  Vector decision;
  /// b - a'x for every inequality row of the next-step problem.
  Vector margins;
  double min_margin = 0.0;
  /// |z(N) - z_s|_inf; nonzero whenever the error at the new step is nonzero.
  double terminal_residual = 0.0;
  /// Largest residual of the dynamics and steady equalities.
  double other_equality_residual = 0.0;
};

/// Shifted candidate for step k+1 built from the optimum at step k:
/// u(j) = K (z(j) - z*(j+1)) + u*(j+1) for j < N-1, u(N-1) = u_s*, steady pair kept.
CandidateReport shifted_candidate(const KtmpcSolution& prev, const KoopmanModel& model,
                                  const KtmpcConfig& config, const TighteningSchedule& schedule,
                                  const Vector& z_next, const Vector& y_t);

/// Largest value of |y - y_t|_S^2 - |y_s* - y_t|_S^2 + s (2 sig - sig^2) |y_s* - y_sr|^2
/// over the samples, with y = (1 - sig) y_s* + sig y_sr.
double segment_inequality_gap(const Vector& y_s_star, const Vector& y_sr_tilde, const Vector& y_t,
                              double s, const std::vector<double>& sigma_samples);

/// True when segment_inequality_gap <= tol.
bool segment_inequality_check(const Vector& y_s_star, const Vector& y_sr_tilde, const Vector& y_t,
                              double s, const std::vector<double>& sigma_samples,
                              double tol = 1e-9);

/// One closed loop's controller: caches the steady target per reference and
/// warm starts each step from the shifted previous optimum.
class KtmpcController {
 public:
  KtmpcController(KoopmanModel model, KtmpcConfig config, TighteningSchedule schedule);

  const KoopmanModel& model() const { return model_; }
  const KtmpcConfig& config() const { return config_; }
  const TighteningSchedule& schedule() const { return schedule_; }

  /// Solves the step from lifted state z0; returns the optimum.
  const KtmpcSolution& step(const Vector& z0, const Vector& y_t);
  const SteadyTarget& offline_target(const Vector& y_t);

  const std::optional<KtmpcSolution>& last() const { return last_; }
  void reset();

 private:
  KoopmanModel model_;
  KtmpcConfig config_;
  TighteningSchedule schedule_;
  std::optional<KtmpcSolution> last_;
  std::optional<Vector> cached_ref_;
  std::optional<SteadyTarget> cached_target_;
};

}  // namespace ktmpc
