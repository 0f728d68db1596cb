#include "uavmm/sca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/SparseCore>

#include "uavmm/allocation.hpp"
#include "uavmm/qcqp.hpp"

namespace uavmm {

namespace {

constexpr double kLog2E = 1.4426950408889634;
constexpr double kServedTol = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

ScaCoefficients sca_coefficients(const Scenario& sc, const Allocation& alloc,
                                 const Trajectory& anchor) {
  const int k_count = sc.user_count();
  const int n_count = anchor.slot_count();
  ScaCoefficients out;
  out.a = Eigen::MatrixXd::Zero(k_count, n_count);
  out.b = Eigen::MatrixXd::Zero(k_count, n_count);
  out.anchor = anchor;
  out.anchor_d2.resize(k_count, n_count);
  out.users.reserve(k_count);
  for (const auto& u : sc.users) out.users.push_back(u.position);
  const double h2 = sc.uav.altitude * sc.uav.altitude;
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) {
      out.anchor_d2(k, n) =
          (anchor.waypoints[n] - sc.users[k].position).squaredNorm();
      const double alpha = alloc.bandwidth(k, n);
      if (alpha <= kServedTol) continue;
      // gamma_kn = p rho0 / (alpha B N0): per-pair SNR numerator, m^2 scale.
      const double gamma = (alloc.power(k, n) / alpha) * sc.uav.gamma0();
      if (gamma <= 0.0) continue;
      const double denom = h2 + out.anchor_d2(k, n);
      out.a(k, n) = gamma * kLog2E / (denom * (denom + gamma));
      out.b(k, n) = std::log2(1.0 + gamma / denom);
    }
  return out;
}

double surrogate_rate(const ScaCoefficients& coeffs, const Allocation& alloc,
                      const Trajectory& traj, int k, int n) {
  const double alpha = alloc.bandwidth(k, n);
  if (alpha <= kServedTol) return 0.0;
  const double d2 = (traj.waypoints[n] - coeffs.users[k]).squaredNorm();
  return alpha *
         (-coeffs.a(k, n) * (d2 - coeffs.anchor_d2(k, n)) + coeffs.b(k, n));
}

double surrogate_eta(const Scenario& sc, const ScaCoefficients& coeffs,
                     const Allocation& alloc, const Trajectory& traj,
                     const Eigen::VectorXd& theta_temp) {
  const int k_count = sc.user_count();
  const int n_count = traj.slot_count();
  double eta = kInf;
  for (int k = 0; k < k_count; ++k) {
    double avg = 0.0;
    for (int n = 0; n < n_count; ++n) {
      const double r = surrogate_rate(coeffs, alloc, traj, k, n);
      avg += r;
      if (theta_temp[k] > 0.0 && alloc.bandwidth(k, n) > kServedTol)
        eta = std::min(eta, r / theta_temp[k]);
    }
    eta = std::min(eta, avg / n_count);
  }
  return eta;
}

TrajectoryStep solve_trajectory_step(const Scenario& sc, const Allocation& alloc,
                                     const Eigen::VectorXd& theta_temp,
                                     const Trajectory& anchor) {
  const int k_count = sc.user_count();
  const int n_count = anchor.slot_count();
  const ScaCoefficients coeffs = sca_coefficients(sc, alloc, anchor);
  const double anchor_eta = surrogate_eta(sc, coeffs, alloc, anchor, theta_temp);

  // Variables: eta_lb, then the free waypoints q[0..N-2]; the last waypoint
  // is identified with the first, which enforces periodicity exactly and
  // keeps the constraint quadratics sparse.
  const int free_points = n_count - 1;
  const int dim = 1 + 2 * free_points;
  const auto var_of_slot = [&](int n) { return n == n_count - 1 ? 0 : n; };
  const auto x_col = [&](int n) { return 1 + 2 * var_of_slot(n); };

  ConvexQcqp qcqp;
  qcqp.objective = Eigen::VectorXd::Zero(dim);
  qcqp.objective[0] = -1.0;  // maximize eta_lb
  qcqp.eq_lhs.resize(0, dim);
  qcqp.eq_rhs.resize(0);

  using Triplet = Eigen::Triplet<double>;
  // eta_lb <= (1/N) sum_n r_lb_kn per user.
  for (int k = 0; k < k_count; ++k) {
    QuadraticConstraint con;
    con.linear = Eigen::VectorXd::Zero(dim);
    con.linear[0] = 1.0;
    std::vector<Triplet> trips;
    for (int n = 0; n < n_count; ++n) {
      const double aa = alloc.bandwidth(k, n) * coeffs.a(k, n);
      const double c_kn = alloc.bandwidth(k, n) *
                          (coeffs.a(k, n) * coeffs.anchor_d2(k, n) + coeffs.b(k, n));
      con.constant -= c_kn / n_count;
      if (aa <= 0.0) continue;
      const int x = x_col(n);
      const double q_coef = 2.0 * aa / n_count;
      trips.emplace_back(x, x, q_coef);
      trips.emplace_back(x + 1, x + 1, q_coef);
      con.linear[x] -= q_coef * coeffs.users[k].x();
      con.linear[x + 1] -= q_coef * coeffs.users[k].y();
      con.constant += (aa / n_count) * coeffs.users[k].squaredNorm();
    }
    con.quadratic.resize(dim, dim);
    con.quadratic.setFromTriplets(trips.begin(), trips.end());
    qcqp.constraints.push_back(std::move(con));
  }
  // theta_temp_k * eta_lb <= r_lb_kn for served pairs of users with an MRR;
  // unserved pairs are dropped (a vacuous 0 >= theta eta row would falsely
  // pin eta_lb at zero).
  for (int k = 0; k < k_count; ++k) {
    if (theta_temp[k] <= 0.0) continue;
    for (int n = 0; n < n_count; ++n) {
      const double alpha = alloc.bandwidth(k, n);
      if (alpha <= kServedTol) continue;
      const double aa = alpha * coeffs.a(k, n);
      QuadraticConstraint con;
      con.linear = Eigen::VectorXd::Zero(dim);
      con.linear[0] = theta_temp[k];
      con.constant =
          -alpha * (coeffs.a(k, n) * coeffs.anchor_d2(k, n) + coeffs.b(k, n));
      std::vector<Triplet> trips;
      if (aa > 0.0) {
        const int x = x_col(n);
        trips.emplace_back(x, x, 2.0 * aa);
        trips.emplace_back(x + 1, x + 1, 2.0 * aa);
        con.linear[x] = -2.0 * aa * coeffs.users[k].x();
        con.linear[x + 1] = -2.0 * aa * coeffs.users[k].y();
        con.constant += aa * coeffs.users[k].squaredNorm();
      }
      con.quadratic.resize(dim, dim);
      con.quadratic.setFromTriplets(trips.begin(), trips.end());
      qcqp.constraints.push_back(std::move(con));
    }
  }
  // ||q[n+1] - q[n]||^2 <= S_max^2.
  const double s2 = sc.uav.max_step() * sc.uav.max_step();
  for (int n = 0; n + 1 < n_count; ++n) {
    const int xa = x_col(n);
    const int xb = x_col(n + 1);
    if (xa == xb) continue;  // identified waypoints, zero step
    QuadraticConstraint con;
    con.linear = Eigen::VectorXd::Zero(dim);
    con.constant = -s2;
    std::vector<Triplet> trips = {
        {xa, xa, 2.0},     {xa + 1, xa + 1, 2.0}, {xb, xb, 2.0},
        {xb + 1, xb + 1, 2.0}, {xa, xb, -2.0},    {xb, xa, -2.0},
        {xa + 1, xb + 1, -2.0}, {xb + 1, xa + 1, -2.0}};
    con.quadratic.resize(dim, dim);
    con.quadratic.setFromTriplets(trips.begin(), trips.end());
    qcqp.constraints.push_back(std::move(con));
  }

  Eigen::VectorXd initial(dim);
  initial[0] = anchor_eta - 1e-6 * (1.0 + std::abs(anchor_eta));
  for (int n = 0; n < free_points; ++n) {
    initial[1 + 2 * n] = anchor.waypoints[n].x();
    initial[2 + 2 * n] = anchor.waypoints[n].y();
  }

  TrajectoryStep out;
  out.trajectory = anchor;
  out.eta_lb = anchor_eta;
  QcqpSolution sol;
  try {
    sol = solve_qcqp(qcqp, initial);
  } catch (const std::exception&) {
    out.feasible = false;
    return out;
  }
  if (sol.status == QcqpStatus::Infeasible) {
    out.feasible = false;
    return out;
  }
  Trajectory traj;
  traj.waypoints.resize(n_count);
  for (int n = 0; n < n_count; ++n) {
    const int x = x_col(n);
    traj.waypoints[n] = Vec2(sol.x[x], sol.x[x + 1]);
  }
  const double eta = surrogate_eta(sc, coeffs, alloc, traj, theta_temp);
  // The anchor is feasible in the surrogate problem, so never step backward.
  if (eta >= anchor_eta) {
    out.trajectory = std::move(traj);
    out.eta_lb = eta;
  }
  return out;
}

ScaResult sca_loop(const Scenario& sc, const Allocation& alloc,
                   const Eigen::VectorXd& theta_temp, const Trajectory& initial) {
  ScaResult out;
  out.trajectory = initial;
  double prev = -kInf;
  for (int iter = 0; iter < 30; ++iter) {
    const TrajectoryStep step =
        solve_trajectory_step(sc, alloc, theta_temp, out.trajectory);
    if (!step.feasible) {
      if (iter == 0) {
        out.feasible = false;
        out.eta = achieved_eta(sc, out.trajectory, alloc, theta_temp);
        return out;
      }
      break;
    }
    out.trajectory = step.trajectory;
    out.eta_lb = step.eta_lb;
    ++out.iterations;
    if (std::isfinite(prev) &&
        step.eta_lb - prev < 1e-4 * std::max(1.0, std::abs(step.eta_lb)))
      break;
    prev = step.eta_lb;
  }
  out.eta = achieved_eta(sc, out.trajectory, alloc, theta_temp);
  return out;
}

}  // namespace uavmm
