#include "ktmpc/controller.hpp"

#include "ktmpc/errors.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace ktmpc {

void KtmpcConfig::validate(int lifted_dim, int input_dim) const {
  if (N < 1) throw DimensionError("KtmpcConfig: N must be >= 1");
  if (Q.rows() != lifted_dim || Q.cols() != lifted_dim) throw DimensionError("KtmpcConfig: Q must be n_z x n_z");
  if (R.rows() != input_dim || R.cols() != input_dim) throw DimensionError("KtmpcConfig: R must be n_u x n_u");
  if (K.rows() != input_dim || K.cols() != lifted_dim) throw DimensionError("KtmpcConfig: K must be n_u x n_z");
  if (!(s > 0.0)) throw DimensionError("KtmpcConfig: s must be positive");
  for (const Matrix* m : {&Q, &R}) {
    const Eigen::LLT<Matrix> llt(*m);
    if (llt.info() != Eigen::Success || !m->isApprox(m->transpose()))
      throw DimensionError("KtmpcConfig: Q and R must be symmetric positive definite");
  }
}

namespace {

void check_schedule(const KoopmanModel& model, const TighteningSchedule& schedule, int N) {
  if (schedule.horizon() != N)
    throw DimensionError("schedule horizon " + std::to_string(schedule.horizon()) + " does not match N = " +
                         std::to_string(N));
  if (schedule.input_sets.size() != schedule.state_sets.size())
    throw DimensionError("schedule: state and input set counts differ");
  if (schedule.state_sets.front().dim() != model.state_dim() || schedule.input_sets.front().dim() != model.input_dim())
    throw DimensionError("schedule: set dimensions do not match the model");
}

// Inequality rows G C_x z <= h and H u <= k placed at the given offsets.
void place_state_rows(Matrix& A, Vector& b, int row, const HPolytope& X, const Matrix& Cx, int col) {
  A.block(row, col, X.rows(), Cx.cols()) = X.normals * Cx;
  b.segment(row, X.rows()) = X.offsets;
}

void place_input_rows(Matrix& A, Vector& b, int row, const HPolytope& U, int col) {
  A.block(row, col, U.rows(), U.dim()) = U.normals;
  b.segment(row, U.rows()) = U.offsets;
}

SteadyTarget make_target(const KoopmanModel& model, const Vector& z_s, const Vector& u_s, const Vector& y_t,
                         double s) {
  SteadyTarget t;
  t.z_s = z_s;
  t.u_s = u_s;
  t.y_s = model.C_y() * z_s;
  t.offset_cost = s * (t.y_s - y_t).squaredNorm();
  return t;
}

}  // namespace

SteadyTarget solve_steady_offline(const KoopmanModel& model, const TighteningSchedule& schedule,
                                  const Vector& y_t, double s) {
  const int nz = model.lifted_dim();
  const int nu = model.input_dim();
  if (y_t.size() != model.output_dim()) throw DimensionError("solve_steady_offline: reference dimension mismatch");
  const int N = schedule.horizon();
  const HPolytope& XN = schedule.state_sets[N];
  const HPolytope& UN = schedule.input_sets[N];
  const int n = nz + nu;

  Matrix P = Matrix::Zero(n, n);
  Vector q = Vector::Zero(n);
  P.topLeftCorner(nz, nz) = 2.0 * s * model.C_y().transpose() * model.C_y();
  q.head(nz) = -2.0 * s * model.C_y().transpose() * y_t;

  Matrix Aeq(nz, n);
  Aeq << Matrix::Identity(nz, nz) - model.A(), -model.B();
  Matrix Ain = Matrix::Zero(XN.rows() + UN.rows(), n);
  Vector bin(XN.rows() + UN.rows());
  place_state_rows(Ain, bin, 0, XN, model.C_x(), 0);
  place_input_rows(Ain, bin, XN.rows(), UN, nz);

  const QuadraticProgram qp(P, q, Aeq, Vector::Zero(nz), Ain, bin, s * y_t.squaredNorm());
  const auto sol = solve(qp);
  if (sol.status == QpStatus::primal_infeasible)
    throw InfeasibleSteadyState("no steady pair satisfies the tightened terminal constraints");
  if (sol.status != QpStatus::optimal) throw Error("steady target: QP solver did not converge");
  return make_target(model, sol.x_star.head(nz), sol.x_star.tail(nu), y_t, s);
}

QuadraticProgram build_qp(const KoopmanModel& model, const KtmpcConfig& config,
                          const TighteningSchedule& schedule, const Vector& x_k, const Vector& y_t) {
  if (x_k.size() != model.state_dim()) throw DimensionError("build_qp: state dimension mismatch");
  return build_qp_lifted(model, config, schedule, model.lift(x_k), y_t);
}

QuadraticProgram build_qp_lifted(const KoopmanModel& model, const KtmpcConfig& config,
                                 const TighteningSchedule& schedule, const Vector& z0,
                                 const Vector& y_t) {
  const int nz = model.lifted_dim();
  const int nu = model.input_dim();
  const int N = config.N;
  config.validate(nz, nu);
  check_schedule(model, schedule, N);
  if (z0.size() != nz) throw DimensionError("build_qp: lifted state dimension mismatch");
  if (y_t.size() != model.output_dim()) throw DimensionError("build_qp: reference dimension mismatch");

  const DecisionLayout L{N, nz, nu};
  const int n = L.size();
  const Matrix& A = model.A();
  const Matrix& B = model.B();
  const Matrix& Q = config.Q;
  const Matrix& R = config.R;
  const Matrix& Cy = model.C_y();

  // Cost
  Matrix P = Matrix::Zero(n, n);
  Vector q = Vector::Zero(n);
  double c0 = config.s * y_t.squaredNorm() + z0.dot(Q * z0);
  P.block(L.z_s(), L.z_s(), nz, nz) += 2.0 * config.s * Cy.transpose() * Cy;
  q.segment(L.z_s(), nz) -= 2.0 * config.s * Cy.transpose() * y_t;
  // j = 0 state term with the fixed z(0)
  P.block(L.z_s(), L.z_s(), nz, nz) += 2.0 * Q;
  q.segment(L.z_s(), nz) -= 2.0 * Q * z0;
  for (int j = 1; j < N; ++j) {
    P.block(L.z(j), L.z(j), nz, nz) += 2.0 * Q;
    P.block(L.z(j), L.z_s(), nz, nz) -= 2.0 * Q;
    P.block(L.z_s(), L.z(j), nz, nz) -= 2.0 * Q;
    P.block(L.z_s(), L.z_s(), nz, nz) += 2.0 * Q;
  }
  for (int j = 0; j < N; ++j) {
    P.block(L.u(j), L.u(j), nu, nu) += 2.0 * R;
    P.block(L.u(j), L.u_s(), nu, nu) -= 2.0 * R;
    P.block(L.u_s(), L.u(j), nu, nu) -= 2.0 * R;
    P.block(L.u_s(), L.u_s(), nu, nu) += 2.0 * R;
  }

  // Equalities: dynamics, steady state, terminal
  const int meq = (N + 2) * nz;
  Matrix Aeq = Matrix::Zero(meq, n);
  Vector beq = Vector::Zero(meq);
  for (int j = 0; j < N; ++j) {
    const int row = j * nz;
    Aeq.block(row, L.z(j + 1), nz, nz).setIdentity();
    Aeq.block(row, L.u(j), nz, nu) = -B;
    if (j == 0)
      beq.segment(row, nz) = A * z0;
    else
      Aeq.block(row, L.z(j), nz, nz) = -A;
  }
  {
    const int row = N * nz;
    Aeq.block(row, L.z_s(), nz, nz) = Matrix::Identity(nz, nz) - A;
    Aeq.block(row, L.u_s(), nz, nu) = -B;
  }
  {
    const int row = (N + 1) * nz;
    Aeq.block(row, L.z(N), nz, nz).setIdentity();
    Aeq.block(row, L.z_s(), nz, nz) = -Matrix::Identity(nz, nz);
  }

  // Inequalities: tightened sets for j = 0..N-1, terminal sets on the steady pair
  const int mx = schedule.state_sets.front().rows();
  const int mu = schedule.input_sets.front().rows();
  const int m_in = (N + 1) * (mx + mu);
  Matrix Ain = Matrix::Zero(m_in, n);
  Vector bin(m_in);
  int row = 0;
  for (int j = 0; j < N; ++j) {
    const HPolytope& Xj = schedule.state_sets[j];
    if (j == 0) {
      // z(0) is data: the row is a constant check that fails when x_k leaves X~(0)
      bin.segment(row, mx) = Xj.offsets - Xj.normals * (model.C_x() * z0);
    } else {
      place_state_rows(Ain, bin, row, Xj, model.C_x(), L.z(j));
    }
    row += mx;
    place_input_rows(Ain, bin, row, schedule.input_sets[j], L.u(j));
    row += mu;
  }
  place_state_rows(Ain, bin, row, schedule.state_sets[N], model.C_x(), L.z_s());
  row += mx;
  place_input_rows(Ain, bin, row, schedule.input_sets[N], L.u_s());

  return {P, q, Aeq, beq, Ain, bin, c0};
}

KtmpcSolution solve_step(const KoopmanModel& model, const KtmpcConfig& config,
                         const TighteningSchedule& schedule, const Vector& x_k, const Vector& y_t,
                         const std::optional<Vector>& warm_start) {
  if (x_k.size() != model.state_dim()) throw DimensionError("solve_step: state dimension mismatch");
  return solve_step_lifted(model, config, schedule, model.lift(x_k), y_t, warm_start);
}

KtmpcSolution solve_step_lifted(const KoopmanModel& model, const KtmpcConfig& config,
                                const TighteningSchedule& schedule, const Vector& z0,
                                const Vector& y_t, const std::optional<Vector>& warm_start) {
  const QuadraticProgram qp = build_qp_lifted(model, config, schedule, z0, y_t);
  const auto sol = solve(qp, {}, warm_start);
  if (sol.status == QpStatus::primal_infeasible) throw InfeasibleProblem("tracking MPC problem is infeasible");
  if (sol.status != QpStatus::optimal)
    throw Error("tracking MPC: QP solver stopped without certificate (KKT residual " +
                std::to_string(sol.kkt.max()) + ")");

  const int nz = model.lifted_dim();
  const int nu = model.input_dim();
  const DecisionLayout L{config.N, nz, nu};
  KtmpcSolution out;
  out.decision = sol.x_star;
  out.z_bar.push_back(z0);
  for (int j = 0; j < config.N; ++j) {
    out.u_bar.push_back(sol.x_star.segment(L.u(j), nu));
    out.z_bar.push_back(sol.x_star.segment(L.z(j + 1), nz));
  }
  out.target = make_target(model, sol.x_star.segment(L.z_s(), nz), sol.x_star.segment(L.u_s(), nu), y_t, config.s);
  out.total_cost = sol.objective;
  out.qp_status = sol.status;
  out.kkt = sol.kkt;
  return out;
}

LyapunovDiag diagnostics(const KtmpcSolution& solution, const SteadyTarget& offline,
                         const KtmpcConfig& config) {
  LyapunovDiag d;
  for (std::size_t j = 0; j < solution.u_bar.size(); ++j) {
    const Vector dz = solution.z_bar[j] - solution.target.z_s;
    const Vector du = solution.u_bar[j] - solution.target.u_s;
    d.V1 += dz.dot(config.Q * dz) + du.dot(config.R * du);
  }
  d.J_eq_tilde = offline.offset_cost;
  d.V2 = solution.total_cost - offline.offset_cost;
  return d;
}

CandidateReport shifted_candidate(const KtmpcSolution& prev, const KoopmanModel& model,
                                  const KtmpcConfig& config, const TighteningSchedule& schedule,
                                  const Vector& z_next, const Vector& y_t) {
  const int N = config.N;
  const int nz = model.lifted_dim();
  const int nu = model.input_dim();
  if (static_cast<int>(prev.u_bar.size()) != N) throw DimensionError("shifted_candidate: horizon mismatch");

  CandidateReport c;
  c.z_s = prev.target.z_s;
  c.u_s = prev.target.u_s;
  c.z_bar.push_back(z_next);
  for (int j = 0; j < N; ++j) {
    Vector u = j + 1 < N ? Vector(config.K * (c.z_bar[j] - prev.z_bar[j + 1]) + prev.u_bar[j + 1]) : c.u_s;
    c.z_bar.push_back(model.predict(c.z_bar[j], u));
    c.u_bar.push_back(std::move(u));
  }

  const DecisionLayout L{N, nz, nu};
  c.decision.resize(L.size());
  for (int j = 0; j < N; ++j) {
    c.decision.segment(L.u(j), nu) = c.u_bar[j];
    c.decision.segment(L.z(j + 1), nz) = c.z_bar[j + 1];
  }
  c.decision.segment(L.z_s(), nz) = c.z_s;
  c.decision.segment(L.u_s(), nu) = c.u_s;

  const QuadraticProgram qp = build_qp_lifted(model, config, schedule, z_next, y_t);
  c.margins = qp.b_in - qp.A_in * c.decision;
  c.min_margin = c.margins.size() > 0 ? c.margins.minCoeff() : 0.0;
  const Vector eq = qp.A_eq * c.decision - qp.b_eq;
  c.terminal_residual = eq.tail(nz).lpNorm<Eigen::Infinity>();
  c.other_equality_residual = eq.head((N + 1) * nz).lpNorm<Eigen::Infinity>();
  return c;
}

double segment_inequality_gap(const Vector& y_s_star, const Vector& y_sr_tilde, const Vector& y_t,
                              double s, const std::vector<double>& sigma_samples) {
  if (y_s_star.size() != y_t.size() || y_sr_tilde.size() != y_t.size())
    throw DimensionError("segment_inequality_gap: dimension mismatch");
  const double base = s * (y_s_star - y_t).squaredNorm();
  const double dist = (y_s_star - y_sr_tilde).squaredNorm();
  double worst = -std::numeric_limits<double>::infinity();
  for (double sigma : sigma_samples) {
    if (sigma < 0.0 || sigma > 1.0) throw DimensionError("segment_inequality_gap: sigma outside [0, 1]");
    const Vector y = (1.0 - sigma) * y_s_star + sigma * y_sr_tilde;
    const double lhs = s * (y - y_t).squaredNorm() - base;
    const double rhs = -s * (2.0 * sigma - sigma * sigma) * dist;
    worst = std::max(worst, lhs - rhs);
  }
  return worst;
}

bool segment_inequality_check(const Vector& y_s_star, const Vector& y_sr_tilde, const Vector& y_t,
                              double s, const std::vector<double>& sigma_samples, double tol) {
  return segment_inequality_gap(y_s_star, y_sr_tilde, y_t, s, sigma_samples) <= tol;
}

KtmpcController::KtmpcController(KoopmanModel model, KtmpcConfig config, TighteningSchedule schedule)
    : model_(std::move(model)), config_(std::move(config)), schedule_(std::move(schedule)) {
  config_.validate(model_.lifted_dim(), model_.input_dim());
  check_schedule(model_, schedule_, config_.N);
}

const SteadyTarget& KtmpcController::offline_target(const Vector& y_t) {
  if (!cached_ref_ || cached_ref_->size() != y_t.size() || *cached_ref_ != y_t) {
    cached_target_ = solve_steady_offline(model_, schedule_, y_t, config_.s);
    cached_ref_ = y_t;
  }
  return *cached_target_;
}

const KtmpcSolution& KtmpcController::step(const Vector& z0, const Vector& y_t) {
  std::optional<Vector> warm;
  if (last_) warm = shifted_candidate(*last_, model_, config_, schedule_, z0, y_t).decision;
  last_ = solve_step_lifted(model_, config_, schedule_, z0, y_t, warm);
  return *last_;
}

void KtmpcController::reset() {
  last_.reset();
  cached_ref_.reset();
  cached_target_.reset();
}

}  // namespace ktmpc
