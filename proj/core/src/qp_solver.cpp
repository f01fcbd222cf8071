#include "ktmpc/qp_solver.hpp"

#include "ktmpc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ktmpc {

QuadraticProgram::QuadraticProgram(Matrix P_, Vector q_, Matrix A_eq_, Vector b_eq_, Matrix A_in_,
                                   Vector b_in_, double constant_)
    : P(std::move(P_)),
      q(std::move(q_)),
      A_eq(std::move(A_eq_)),
      b_eq(std::move(b_eq_)),
      A_in(std::move(A_in_)),
      b_in(std::move(b_in_)),
      constant(constant_) {
  validate();
  P = 0.5 * (P + P.transpose()).eval();
}

double QuadraticProgram::objective(const Eigen::Ref<const Vector>& x) const {
  return 0.5 * x.dot(P * x) + q.dot(x) + constant;
}

void QuadraticProgram::validate() const {
  const auto n = q.size();
  if (P.rows() != n || P.cols() != n) throw DimensionError("QP: P must be n x n with n = size(q)");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
    throw DimensionError("QP: equality constraint dimensions do not match");
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
    throw DimensionError("QP: inequality constraint dimensions do not match");
  if (!P.allFinite() || !q.allFinite() || !A_eq.allFinite() || !b_eq.allFinite() ||
      !A_in.allFinite() || !b_in.allFinite())
    throw DimensionError("QP: data contains non-finite entries");
}

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal:
      return "optimal";
    case QpStatus::primal_infeasible:
      return "primal_infeasible";
    case QpStatus::max_iterations:
      return "max_iterations";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({stationarity, primal_eq, primal_in, complementarity, dual_infeasibility});
}

KktResiduals kkt_residuals(const QuadraticProgram& qp, const Vector& x, const Vector& eq_mult,
                           const Vector& in_mult) {
  KktResiduals r;
  Vector grad = qp.P * x + qp.q;
  if (qp.num_equalities() > 0) {
    grad += qp.A_eq.transpose() * eq_mult;
    r.primal_eq = (qp.A_eq * x - qp.b_eq).lpNorm<Eigen::Infinity>();
  }
  if (qp.num_inequalities() > 0) {
    grad += qp.A_in.transpose() * in_mult;
    const Vector slack = qp.b_in - qp.A_in * x;
    r.primal_in = std::max(0.0, -slack.minCoeff());
    r.complementarity = (in_mult.array() * slack.array()).abs().maxCoeff();
    r.dual_infeasibility = std::max(0.0, -in_mult.minCoeff());
  }
  r.stationarity = grad.size() > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;
  return r;
}

namespace {

// Dual active-set method for min 1/2 x'Gx + g0'x with G positive definite.
// Internally constraints read n'x >= b (inequalities) and n'x = b
// (equalities); an inequality a'x <= b is stored as n = -a.
class DualActiveSet {
 public:
  DualActiveSet(const QuadraticProgram& qp, const Eigen::LLT<Matrix>& chol, double feas_tol,
                double eq_tol)
      : qp_(qp), n_(qp.num_variables()), meq_(qp.num_equalities()), tol_(feas_tol), eq_tol_(eq_tol) {
    J_ = chol.matrixU().solve(Matrix::Identity(n_, n_));
    R_ = Matrix::Zero(n_, n_);
    in_norms_.resize(qp.num_inequalities());
    for (int i = 0; i < qp.num_inequalities(); ++i) in_norms_[i] = qp.A_in.row(i).norm();
  }

  struct Result {
    bool feasible = false;
    bool converged = false;
    Vector x;
    std::vector<int> active;  // < meq: equality row, otherwise meq + inequality row
    std::vector<double> u;    // multipliers in the internal sign convention
  };

  Result run(const Eigen::LLT<Matrix>& chol, const Vector& g0) {
    Result res;
    x_ = chol.solve(-g0);
    q_ = 0;
    active_.clear();
    u_.clear();
    in_active_.assign(qp_.num_inequalities(), false);

    for (int i = 0; i < meq_; ++i) {
      const Vector np = qp_.A_eq.row(i).transpose();
      const Vector d = J_.transpose() * np;
      const double ztn = d.tail(n_ - q_).squaredNorm();
      const double s = np.dot(x_) - qp_.b_eq(i);
      if (ztn <= 1e-24 * std::max(1.0, d.squaredNorm())) {
        // dependent row: accept if consistent within the primal tolerance
        if (std::abs(s) <= eq_tol_ * (1.0 + std::abs(qp_.b_eq(i)))) continue;
        res.x = x_;
        return res;
      }
      const Vector z = J_.rightCols(n_ - q_) * d.tail(n_ - q_);
      const Vector r = dual_direction(d);
      const double t = -s / ztn;
      x_ += t * z;
      for (int j = 0; j < q_; ++j) u_[j] -= t * r(j);
      add(d, i, t);
    }

    const int cap = 50 * (n_ + qp_.num_inequalities() + meq_) + 100;
    int iter = 0;
    for (;;) {
      int p = -1;
      double worst = -tol_;
      for (int k = 0; k < qp_.num_inequalities(); ++k) {
        if (in_active_[k]) continue;
        const double slack = qp_.b_in(k) - qp_.A_in.row(k).dot(x_);
        const double scaled = in_norms_[k] > 1e-14 ? slack / in_norms_[k] : slack;
        if (scaled < worst) {
          worst = scaled;
          p = k;
        }
      }
      if (p < 0) {
        res.feasible = true;
        res.converged = true;
        break;
      }

      const Vector np = -qp_.A_in.row(p).transpose();
      double up = 0.0;
      bool added = false;
      while (!added) {
        if (++iter > cap) {
          res.feasible = true;
          res.x = x_;
          return res;
        }
        const Vector d = J_.transpose() * np;
        const double ztn = d.tail(n_ - q_).squaredNorm();
        const Vector r = dual_direction(d);

        double t1 = std::numeric_limits<double>::infinity();
        int drop = -1;
        for (int j = 0; j < q_; ++j) {
          if (active_[j] < meq_ || r(j) <= 1e-14) continue;
          const double ratio = u_[j] / r(j);
          if (ratio < t1) {
            t1 = ratio;
            drop = j;
          }
        }

        const bool primal_step = ztn > 1e-24 * std::max(1.0, np.squaredNorm());
        if (!primal_step && drop < 0) {
          res.x = x_;
          return res;
        }
        double t2 = std::numeric_limits<double>::infinity();
        Vector z;
        if (primal_step) {
          z = J_.rightCols(n_ - q_) * d.tail(n_ - q_);
          t2 = (np.dot(x_) + qp_.b_in(p)) / -ztn;
          t2 = std::max(t2, 0.0);
        }
        const double t = std::min(t1, t2);
        if (primal_step) x_ += t * z;
        for (int j = 0; j < q_; ++j) u_[j] -= t * r(j);
        up += t;
        if (t2 <= t1) {
          add(d, meq_ + p, up);
          in_active_[p] = true;
          added = true;
        } else {
          drop_at(drop);
        }
      }
    }
    res.x = x_;
    res.active = active_;
    res.u = u_;
    return res;
  }

 private:
  Vector dual_direction(const Vector& d) const {
    if (q_ == 0) return Vector();
    return R_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solve(d.head(q_));
  }

  void add(Vector d, int id, double multiplier) {
    for (int j = n_ - 1; j > q_; --j) {
      const double a = d(j - 1), b = d(j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h, s = b / h;
      d(j - 1) = h;
      d(j) = 0.0;
      for (int k = 0; k < n_; ++k) {
        const double jp = J_(k, j - 1), jq = J_(k, j);
        J_(k, j - 1) = c * jp + s * jq;
        J_(k, j) = -s * jp + c * jq;
      }
    }
    R_.col(q_).head(q_ + 1) = d.head(q_ + 1);
    ++q_;
    active_.push_back(id);
    u_.push_back(multiplier);
  }

  void drop_at(int pos) {
    const int id = active_[pos];
    if (id >= meq_) in_active_[id - meq_] = false;
    for (int c = pos; c < q_ - 1; ++c) R_.col(c) = R_.col(c + 1);
    R_.col(q_ - 1).setZero();
    for (int j = pos; j < q_ - 1; ++j) {
      const double a = R_(j, j), b = R_(j + 1, j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h, s = b / h;
      for (int col = j; col < q_ - 1; ++col) {
        const double rp = R_(j, col), rq = R_(j + 1, col);
        R_(j, col) = c * rp + s * rq;
        R_(j + 1, col) = -s * rp + c * rq;
      }
      for (int k = 0; k < n_; ++k) {
        const double jp = J_(k, j), jq = J_(k, j + 1);
        J_(k, j) = c * jp + s * jq;
        J_(k, j + 1) = -s * jp + c * jq;
      }
    }
    --q_;
    active_.erase(active_.begin() + pos);
    u_.erase(u_.begin() + pos);
  }

  const QuadraticProgram& qp_;
  int n_;
  int meq_;
  double tol_;
  double eq_tol_;
  Matrix J_;
  Matrix R_;
  Vector x_;
  int q_ = 0;
  std::vector<int> active_;
  std::vector<double> u_;
  std::vector<bool> in_active_;
  std::vector<double> in_norms_;
};

struct Candidate {
  Vector x;
  Vector eq_mult;
  Vector in_mult;
  KktResiduals kkt;
};

Candidate from_active_set(const QuadraticProgram& qp, const DualActiveSet::Result& r) {
  Candidate c;
  c.x = r.x;
  c.eq_mult = Vector::Zero(qp.num_equalities());
  c.in_mult = Vector::Zero(qp.num_inequalities());
  const int meq = qp.num_equalities();
  for (std::size_t j = 0; j < r.active.size(); ++j) {
    if (r.active[j] < meq)
      c.eq_mult(r.active[j]) = -r.u[j];
    else
      c.in_mult(r.active[j] - meq) = r.u[j];
  }
  c.kkt = kkt_residuals(qp, c.x, c.eq_mult, c.in_mult);
  return c;
}

// Equality-constrained KKT solve on the active set with the original P.
std::optional<Candidate> polish(const QuadraticProgram& qp, const std::vector<int>& active) {
  const int n = qp.num_variables();
  const int meq = qp.num_equalities();
  const int m = static_cast<int>(active.size());
  Matrix K = Matrix::Zero(n + m, n + m);
  Vector rhs(n + m);
  K.topLeftCorner(n, n) = qp.P;
  rhs.head(n) = -qp.q;
  for (int j = 0; j < m; ++j) {
    const int id = active[j];
    const auto row = id < meq ? qp.A_eq.row(id) : qp.A_in.row(id - meq);
    K.block(n + j, 0, 1, n) = row;
    K.block(0, n + j, n, 1) = row.transpose();
    rhs(n + j) = id < meq ? qp.b_eq(id) : qp.b_in(id - meq);
  }
  const Eigen::PartialPivLU<Matrix> lu(K);
  Vector sol = lu.solve(rhs);
  sol += lu.solve(rhs - K * sol);
  if (!sol.allFinite()) return std::nullopt;

  Candidate c;
  c.x = sol.head(n);
  c.eq_mult = Vector::Zero(meq);
  c.in_mult = Vector::Zero(qp.num_inequalities());
  for (int j = 0; j < m; ++j) {
    if (active[j] < meq)
      c.eq_mult(active[j]) = sol(n + j);
    else
      c.in_mult(active[j] - meq) = sol(n + j);
  }
  c.kkt = kkt_residuals(qp, c.x, c.eq_mult, c.in_mult);
  return c;
}

QpSolution finish(const QuadraticProgram& qp, Candidate c, QpStatus status, int iters) {
  QpSolution s;
  s.objective = qp.objective(c.x);
  s.x_star = std::move(c.x);
  s.eq_multipliers = std::move(c.eq_mult);
  s.in_multipliers = std::move(c.in_mult);
  s.kkt = c.kkt;
  s.status = status;
  s.outer_iterations = iters;
  return s;
}

}  // namespace

QpSolution solve(const QuadraticProgram& qp, const QpSettings& settings,
                 const std::optional<Vector>& warm_start) {
  qp.validate();
  const int n = qp.num_variables();
  if (warm_start && warm_start->size() != n)
    throw DimensionError("QP: warm start has the wrong dimension");

  double scale = 1.0;
  bool positive_definite = true;
  if (n > 0) {
    scale = std::max(1.0, qp.P.diagonal().cwiseAbs().maxCoeff());
    const Eigen::LDLT<Matrix> ldlt(qp.P);
    // A zero pivot ahead of a nonzero trailing block stops the factorization on
    // rank-deficient P; the spectrum decides in that case.
    const double dmin = ldlt.info() == Eigen::Success
                            ? ldlt.vectorD().minCoeff()
                            : Eigen::SelfAdjointEigenSolver<Matrix>(qp.P, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (dmin < -1e-10 * scale) throw NonConvex("QP: P is not positive semidefinite");
    positive_definite = dmin > 1e-9 * scale;
  }
  const double rho = positive_definite ? 0.0 : settings.proximal_weight * scale;
  const Matrix G = qp.P + rho * Matrix::Identity(n, n);
  const Eigen::LLT<Matrix> chol(G);
  if (chol.info() != Eigen::Success) throw NonConvex("QP: regularized Hessian is not positive definite");

  const double feas_tol = std::min(1e-3 * settings.tol, 1e-11);
  DualActiveSet solver(qp, chol, feas_tol, 0.1 * settings.tol);
  Vector center = warm_start ? *warm_start : Vector::Zero(n);

  Candidate last;
  for (int it = 1; it <= settings.max_iter; ++it) {
    const Vector g0 = qp.q - rho * center;
    const auto r = solver.run(chol, g0);
    if (!r.feasible) {
      Candidate c;
      c.x = r.x;
      c.eq_mult = Vector::Zero(qp.num_equalities());
      c.in_mult = Vector::Zero(qp.num_inequalities());
      c.kkt = kkt_residuals(qp, c.x, c.eq_mult, c.in_mult);
      return finish(qp, std::move(c), QpStatus::primal_infeasible, it);
    }
    if (r.converged) {
      if (auto p = polish(qp, r.active); p && p->kkt.max() <= settings.tol)
        return finish(qp, std::move(*p), QpStatus::optimal, it);
    }
    last = from_active_set(qp, r);
    if (r.converged && last.kkt.max() <= settings.tol)
      return finish(qp, std::move(last), QpStatus::optimal, it);
    if (rho == 0.0 && r.converged) return finish(qp, std::move(last), QpStatus::max_iterations, it);
    center = r.x;
  }
  return finish(qp, std::move(last), QpStatus::max_iterations, settings.max_iter);
}

}  // namespace ktmpc
