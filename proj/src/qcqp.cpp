#include "uavmm/qcqp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>

#include "uavmm/ellipsoid.hpp"  // NumericsError

namespace uavmm {

namespace {

bool gershgorin_psd(const Eigen::SparseMatrix<double>& q, double tol) {
  const int n = q.rows();
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < q.outerSize(); ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(q, j); it; ++it) {
      if (it.row() == it.col())
        diag[it.row()] += it.value();
      else
        off[it.row()] += std::abs(it.value());
    }
  }
  return ((diag - off).array() >= -tol).all();
}

bool is_psd(const Eigen::SparseMatrix<double>& q) {
  if (q.nonZeros() == 0) return true;
  double scale = 0.0;
  for (int j = 0; j < q.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(q, j); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  if (gershgorin_psd(q, 1e-10 * scale)) return true;
  if (q.rows() > 600) return false;  // cannot verify cheaply
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(q),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-8 * std::max(scale, 1.0);
}

struct Constraint {
  Eigen::SparseMatrix<double> quadratic;
  Eigen::VectorXd linear;
  double constant;
  std::vector<int> support;  // indices touched by the gradient
};

std::vector<int> support_of(const Eigen::SparseMatrix<double>& q,
                            const Eigen::VectorXd& b) {
  std::vector<char> mark(b.size(), 0);
  for (int j = 0; j < q.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(q, j); it; ++it)
      mark[it.row()] = 1;
  for (int i = 0; i < b.size(); ++i)
    if (b[i] != 0.0) mark[i] = 1;
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(mark.size()); ++i)
    if (mark[i]) out.push_back(i);
  return out;
}

class Barrier {
 public:
  Barrier(Eigen::VectorXd objective, std::vector<Constraint> constraints)
      : c_(std::move(objective)), cons_(std::move(constraints)), n_(c_.size()) {}

  double constraint_value(int i, const Eigen::VectorXd& x) const {
    const Constraint& g = cons_[i];
    double v = g.linear.dot(x) + g.constant;
    if (g.quadratic.nonZeros() > 0) v += 0.5 * x.dot(g.quadratic * x);
    return v;
  }

  bool strictly_feasible(const Eigen::VectorXd& x, double margin) const {
    for (size_t i = 0; i < cons_.size(); ++i)
      if (constraint_value(static_cast<int>(i), x) > -margin) return false;
    return true;
  }

  // Minimizes t*c'x - sum log(-f_i) from a strictly feasible x; x is updated
  // in place. Returns Newton steps spent. `stop` may end centering early.
  template <typename StopFn>
  int center(Eigen::VectorXd& x, double t, int budget, const StopFn& stop) {
    int steps = 0;
    Eigen::VectorXd grad(n_);
    Eigen::MatrixXd hess(n_, n_);
    while (steps < budget) {
      if (stop(x)) break;
      double phi = t * c_.dot(x);
      grad = t * c_;
      hess.setZero();
      bool ok = true;
      for (const Constraint& g : cons_) {
        double f = g.linear.dot(x) + g.constant;
        Eigen::VectorXd qx;
        if (g.quadratic.nonZeros() > 0) {
          qx = g.quadratic * x;
          f += 0.5 * x.dot(qx);
        }
        const double s = -f;
        if (s <= 0.0) {
          ok = false;
          break;
        }
        phi -= std::log(s);
        const double inv_s = 1.0 / s;
        const double inv_s2 = inv_s * inv_s;
        if (g.support.empty()) continue;
        for (int a : g.support) {
          double ga = g.linear[a];
          if (g.quadratic.nonZeros() > 0) ga += qx[a];
          grad[a] += ga * inv_s;
        }
        for (int a : g.support) {
          double ga = g.linear[a];
          if (g.quadratic.nonZeros() > 0) ga += qx[a];
          for (int b : g.support) {
            double gb = g.linear[b];
            if (g.quadratic.nonZeros() > 0) gb += qx[b];
            hess(a, b) += ga * gb * inv_s2;
          }
        }
        if (g.quadratic.nonZeros() > 0)
          for (int j = 0; j < g.quadratic.outerSize(); ++j)
            for (Eigen::SparseMatrix<double>::InnerIterator it(g.quadratic, j); it; ++it)
              hess(it.row(), it.col()) += it.value() * inv_s;
      }
      if (!ok) throw NumericsError("barrier left the feasible region");
      // grad/t is the KKT stationarity residual for the implied multipliers.
      if (grad.norm() <= 1e-9 * t * (1.0 + c_.norm())) break;

      Eigen::LLT<Eigen::MatrixXd> llt(hess);
      if (llt.info() != Eigen::Success) {
        const double reg = 1e-10 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
        hess.diagonal().array() += reg;
        llt.compute(hess);
        if (llt.info() != Eigen::Success)
          throw NumericsError("barrier Hessian factorization failed");
      }
      const Eigen::VectorXd dx = -llt.solve(grad);
      const double decrement2 = -grad.dot(dx);
      ++steps;
      if (decrement2 * 0.5 < 1e-10) break;

      // Backtracking line search: stay strictly feasible, Armijo on phi.
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd xn = x + step * dx;
        if (strictly_feasible(xn, 0.0)) {
          double phin = t * c_.dot(xn);
          for (size_t i = 0; i < cons_.size(); ++i)
            phin -= std::log(-constraint_value(static_cast<int>(i), xn));
          if (phin <= phi - 1e-4 * step * decrement2) {
            x = xn;
            moved = phi - phin > 1e-13 * (1.0 + std::abs(phi));
            break;
          }
        }
        step *= 0.5;
      }
      if (!moved) break;  // stalled at floating-point resolution
    }
    return steps;
  }

  const Eigen::VectorXd& objective() const { return c_; }
  int num_constraints() const { return static_cast<int>(cons_.size()); }
  int dim() const { return n_; }

  Eigen::VectorXd gradient_of(int i, const Eigen::VectorXd& x) const {
    const Constraint& g = cons_[i];
    Eigen::VectorXd out = g.linear;
    if (g.quadratic.nonZeros() > 0) out += g.quadratic * x;
    return out;
  }

 private:
  Eigen::VectorXd c_;
  std::vector<Constraint> cons_;
  int n_;
};

std::vector<Constraint> build_constraints(const ConvexQcqp& qcqp) {
  std::vector<Constraint> cons;
  cons.reserve(qcqp.constraints.size());
  for (const QuadraticConstraint& g : qcqp.constraints) {
    Constraint c;
    c.quadratic = g.quadratic;
    if (c.quadratic.rows() == 0)
      c.quadratic.resize(qcqp.dim(), qcqp.dim());
    c.linear = g.linear;
    c.constant = g.constant;
    c.support = support_of(c.quadratic, c.linear);
    cons.push_back(std::move(c));
  }
  return cons;
}

// Phase I: minimize s subject to f_i(x) - s <= 0. Returns a strictly
// feasible x, or false if none exists.
bool phase_one(const Barrier& model, const std::vector<Constraint>& cons,
               Eigen::VectorXd& x, int& steps, const QcqpOptions& opts) {
  const int n = model.dim();
  std::vector<Constraint> aug;
  aug.reserve(cons.size());
  for (const Constraint& g : cons) {
    Constraint c;
    c.quadratic.resize(n + 1, n + 1);
    if (g.quadratic.nonZeros() > 0) {
      std::vector<Eigen::Triplet<double>> trip;
      for (int j = 0; j < g.quadratic.outerSize(); ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(g.quadratic, j); it; ++it)
          trip.emplace_back(it.row(), it.col(), it.value());
      c.quadratic.setFromTriplets(trip.begin(), trip.end());
    }
    c.linear = Eigen::VectorXd::Zero(n + 1);
    c.linear.head(n) = g.linear;
    c.linear[n] = -1.0;
    c.constant = g.constant;
    c.support = support_of(c.quadratic, c.linear);
    aug.push_back(std::move(c));
  }

  Eigen::VectorXd obj = Eigen::VectorXd::Zero(n + 1);
  obj[n] = 1.0;
  Barrier phase1(obj, std::move(aug));

  Eigen::VectorXd z(n + 1);
  z.head(n) = x;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < model.num_constraints(); ++i)
    worst = std::max(worst, model.constraint_value(i, x));
  const double scale = 1.0 + std::abs(worst);
  z[n] = worst + scale;

  const double target = -1e-6 * scale;
  auto done = [&](const Eigen::VectorXd& p) { return p[n] < target; };
  double t = 1.0;
  for (int round = 0; round < 60; ++round) {
    steps += phase1.center(z, t, opts.max_newton_steps, done);
    if (done(z)) break;
    if (phase1.num_constraints() / t < 1e-9 * scale) break;
    t *= opts.barrier_factor;
  }
  if (!done(z)) return false;
  x = z.head(n);
  return true;
}

}  // namespace

void ConvexQcqp::validate() const {
  const int n = dim();
  for (const QuadraticConstraint& g : constraints) {
    if (g.linear.size() != n)
      throw NumericsError("qcqp: linear term dimension mismatch");
    if (g.quadratic.rows() != 0 &&
        (g.quadratic.rows() != n || g.quadratic.cols() != n))
      throw NumericsError("qcqp: quadratic term dimension mismatch");
    if (g.quadratic.rows() != 0 && !is_psd(g.quadratic))
      throw NumericsError("qcqp: quadratic term is not positive semidefinite");
  }
  if (eq_lhs.rows() != eq_rhs.size())
    throw NumericsError("qcqp: equality dimensions inconsistent");
  if (eq_lhs.rows() > 0 && eq_lhs.cols() != n)
    throw NumericsError("qcqp: equality dimensions inconsistent");
}

QcqpSolution solve_qcqp(const ConvexQcqp& qcqp, const Eigen::VectorXd& initial,
                        const QcqpOptions& opts) {
  qcqp.validate();
  QcqpSolution out;
  const int n = qcqp.dim();

  // Equalities are removed by a null-space substitution x = x_p + Z y.
  Eigen::MatrixXd null_basis;
  Eigen::VectorXd x_particular = Eigen::VectorXd::Zero(n);
  bool reduced = qcqp.eq_lhs.rows() > 0;
  if (reduced) {
    x_particular = qcqp.eq_lhs.colPivHouseholderQr().solve(qcqp.eq_rhs);
    if ((qcqp.eq_lhs * x_particular - qcqp.eq_rhs).norm() >
        1e-8 * (1.0 + qcqp.eq_rhs.norm())) {
      out.status = QcqpStatus::Infeasible;
      return out;
    }
    Eigen::MatrixXd kernel = Eigen::FullPivLU<Eigen::MatrixXd>(qcqp.eq_lhs).kernel();
    null_basis = Eigen::HouseholderQR<Eigen::MatrixXd>(kernel)
                     .householderQ() *
                 Eigen::MatrixXd::Identity(n, kernel.cols());
  }

  auto to_full = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    return reduced ? Eigen::VectorXd(x_particular + null_basis * y) : y;
  };

  std::vector<Constraint> cons;
  Eigen::VectorXd objective;
  if (!reduced) {
    cons = build_constraints(qcqp);
    objective = qcqp.objective;
  } else {
    for (const QuadraticConstraint& g : qcqp.constraints) {
      Constraint c;
      const int ny = static_cast<int>(null_basis.cols());
      Eigen::MatrixXd qy = Eigen::MatrixXd::Zero(ny, ny);
      Eigen::VectorXd gx = g.linear;
      double c0 = g.constant + g.linear.dot(x_particular);
      if (g.quadratic.nonZeros() > 0) {
        const Eigen::MatrixXd qd(g.quadratic);
        qy = null_basis.transpose() * qd * null_basis;
        gx += qd * x_particular;
        c0 += 0.5 * x_particular.dot(qd * x_particular);
      }
      c.quadratic = qy.sparseView(1e-14);
      c.linear = null_basis.transpose() * gx;
      c.constant = c0;
      c.support = support_of(c.quadratic, c.linear);
      cons.push_back(std::move(c));
    }
    objective = null_basis.transpose() * qcqp.objective;
  }

  Barrier model(objective, cons);
  Eigen::VectorXd y;
  if (!reduced) {
    y = initial;
  } else {
    y = null_basis.transpose() * (initial - x_particular);
  }

  int steps = 0;
  double feas_scale = 1.0;
  for (int i = 0; i < model.num_constraints(); ++i)
    feas_scale = std::max(feas_scale, std::abs(cons[i].constant));
  if (!model.strictly_feasible(y, 1e-12 * feas_scale)) {
    if (!phase_one(model, cons, y, steps, opts)) {
      out.status = QcqpStatus::Infeasible;
      out.newton_steps = steps;
      return out;
    }
  }

  const int m = model.num_constraints();
  double t = 1.0;
  auto never = [](const Eigen::VectorXd&) { return false; };
  QcqpStatus status = QcqpStatus::MaxIterations;
  while (steps < opts.max_newton_steps) {
    steps += model.center(y, t, std::min(200, opts.max_newton_steps - steps), never);
    const double scale = 1.0 + std::abs(objective.dot(y));
    if (m / t <= opts.gap_tol * scale) {
      status = QcqpStatus::Optimal;
      break;
    }
    t *= opts.barrier_factor;
  }

  out.status = status;
  out.x = to_full(y);
  out.value = qcqp.objective.dot(out.x);
  out.newton_steps = steps;
  out.multipliers.resize(m);
  Eigen::VectorXd stat = objective;
  double comp = 0.0, feas = 0.0;
  for (int i = 0; i < m; ++i) {
    const double f = model.constraint_value(i, y);
    const double lam = (f < 0.0) ? 1.0 / (t * (-f)) : 0.0;
    out.multipliers[i] = lam;
    stat += lam * model.gradient_of(i, y);
    comp = std::max(comp, std::abs(lam * f));
    feas = std::max(feas, f);
  }
  // The barrier multipliers 1/(t s_i) are only exact at a perfect analytic
  // center; a least-squares fit on the near-active gradients is sharper.
  std::vector<int> active;
  const double lam_floor = 1e-10 * (1.0 + out.multipliers.maxCoeff());
  for (int i = 0; i < m; ++i)
    if (out.multipliers[i] > lam_floor) active.push_back(i);
  while (!active.empty()) {
    const int k = static_cast<int>(active.size());
    Eigen::MatrixXd g(model.dim(), k);
    for (int j = 0; j < k; ++j) g.col(j) = model.gradient_of(active[j], y);
    Eigen::VectorXd lam = g.colPivHouseholderQr().solve(-objective);
    int worst = -1;
    for (int j = 0; j < k; ++j)
      if (lam[j] < 0.0 && (worst < 0 || lam[j] < lam[worst])) worst = j;
    if (worst >= 0) {
      active.erase(active.begin() + worst);
      continue;
    }
    const double refined = (objective + g * lam).norm();
    if (refined < stat.norm()) {
      out.multipliers.setZero();
      comp = 0.0;
      for (int j = 0; j < k; ++j) {
        out.multipliers[active[j]] = lam[j];
        comp = std::max(comp,
                        std::abs(lam[j] * model.constraint_value(active[j], y)));
      }
      stat = objective + g * lam;
    }
    break;
  }
  out.kkt_stationarity = stat.norm() / (1.0 + objective.norm());
  out.kkt_feasibility = std::max(0.0, feas);
  out.kkt_complementarity = comp;
  return out;
}

}  // namespace uavmm
