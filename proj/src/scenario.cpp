#include "uavmm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uavmm {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ValidationError(field + ": " + why);
}

}  // namespace

Eigen::VectorXd Scenario::mrr_vector() const {
  Eigen::VectorXd theta(user_count());
  for (int k = 0; k < user_count(); ++k) theta[k] = users[k].mrr;
  return theta;
}

void Scenario::validate() const {
  require(!users.empty(), "users", "at least one user is required");
  for (size_t k = 0; k < users.size(); ++k) {
    const UserSpec& u = users[k];
    require(std::isfinite(u.position.x()) && std::isfinite(u.position.y()),
            "users[" + std::to_string(k) + "].position", "must be finite");
    require(u.mrr >= 0.0 && u.mrr <= 1.0, "users[" + std::to_string(k) + "].mrr",
            "must lie in [0, 1]");
  }
  require(uav.altitude > 0.0, "altitude", "must be positive");
  require(uav.v_max > 0.0, "v_max", "must be positive");
  require(uav.p_max > 0.0, "p_max", "must be positive");
  require(uav.period > 0.0, "period", "must be positive");
  require(uav.slots >= 2, "slots", "must be at least 2");
  require(uav.bandwidth > 0.0, "bandwidth", "must be positive");
  require(std::isfinite(uav.noise_psd_dbm), "noise_psd", "must be finite");
  require(std::isfinite(uav.ref_gain_db), "ref_gain", "must be finite");
}

namespace {

void check_indices(const Scenario& sc, const Trajectory& traj, int user, int slot) {
  if (user < 0 || user >= sc.user_count())
    throw std::out_of_range("user index " + std::to_string(user));
  if (slot < 0 || slot >= traj.slot_count())
    throw std::out_of_range("slot index " + std::to_string(slot));
}

}  // namespace

double channel_gain(const Scenario& sc, const Trajectory& traj, int user, int slot) {
  check_indices(sc, traj, user, slot);
  const double h2 = sc.uav.altitude * sc.uav.altitude;
  const double d2 = (traj.waypoints[slot] - sc.users[user].position).squaredNorm();
  return sc.uav.ref_gain_linear() / (h2 + d2);
}

double gain_over_noise(const Scenario& sc, const Trajectory& traj, int user, int slot) {
  check_indices(sc, traj, user, slot);
  const double h2 = sc.uav.altitude * sc.uav.altitude;
  const double d2 = (traj.waypoints[slot] - sc.users[user].position).squaredNorm();
  return sc.uav.gamma0() / (h2 + d2);
}

double instantaneous_rate(double alpha, double power, double gain_over_noise) {
  if (alpha <= 0.0) return 0.0;
  return alpha * std::log2(1.0 + power * gain_over_noise / alpha);
}

double average_throughput(const Scenario& sc, const Trajectory& traj,
                          const Allocation& alloc, int user) {
  const int n_slots = traj.slot_count();
  double sum = 0.0;
  for (int n = 0; n < n_slots; ++n) {
    sum += instantaneous_rate(alloc.bandwidth(user, n), alloc.power(user, n),
                              gain_over_noise(sc, traj, user, n));
  }
  return sum / n_slots;
}

double FeasibilityReport::worst_slack() const {
  double worst = 0.0;
  for (const ConstraintViolation& v : violations) worst = std::min(worst, v.slack);
  return worst;
}

FeasibilityReport check_feasibility(const Scenario& sc, const Trajectory& traj,
                                    const Allocation& alloc, double eta, double rel_tol) {
  FeasibilityReport report;
  const int n_users = sc.user_count();
  const int n_slots = traj.slot_count();
  auto flag = [&](const std::string& name, int user, int slot, double slack) {
    report.violations.push_back({name, user, slot, slack});
  };

  const double rate_scale = std::max(1.0, std::abs(eta));
  const double rate_tol = rel_tol * rate_scale;

  Eigen::MatrixXd rates(n_users, n_slots);
  for (int k = 0; k < n_users; ++k)
    for (int n = 0; n < n_slots; ++n)
      rates(k, n) = instantaneous_rate(alloc.bandwidth(k, n), alloc.power(k, n),
                                       gain_over_noise(sc, traj, k, n));

  for (int k = 0; k < n_users; ++k) {
    const double avg = rates.row(k).sum() / n_slots;
    if (avg - eta < -rate_tol) flag("min_throughput", k, -1, avg - eta);
    const double theta = sc.users[k].mrr;
    if (theta > 0.0) {
      for (int n = 0; n < n_slots; ++n) {
        const double slack = rates(k, n) - theta * eta;
        if (slack < -rate_tol) flag("mrr", k, n, slack);
      }
    }
  }

  const double p_tol = rel_tol * sc.uav.p_max;
  const double a_tol = rel_tol;
  for (int n = 0; n < n_slots; ++n) {
    double p_sum = 0.0, a_sum = 0.0;
    for (int k = 0; k < n_users; ++k) {
      const double a = alloc.bandwidth(k, n);
      const double p = alloc.power(k, n);
      if (a < -a_tol) flag("bandwidth_nonneg", k, n, a);
      if (a > 1.0 + a_tol) flag("bandwidth_box", k, n, 1.0 - a);
      if (p < -p_tol) flag("power_nonneg", k, n, p);
      if (a <= a_tol && p > p_tol) flag("power_without_bandwidth", k, n, -p);
      p_sum += p;
      a_sum += a;
    }
    if (p_sum > sc.uav.p_max + p_tol) flag("power_sum", -1, n, sc.uav.p_max - p_sum);
    if (a_sum > 1.0 + a_tol) flag("bandwidth_sum", -1, n, 1.0 - a_sum);
  }

  const double s_max = sc.uav.max_step();
  const double s_tol = rel_tol * std::max(s_max, 1.0);
  for (int n = 0; n + 1 < n_slots; ++n) {
    const double hop = (traj.waypoints[n + 1] - traj.waypoints[n]).norm();
    if (hop > s_max + s_tol) flag("speed", -1, n, s_max - hop);
  }
  const double wrap = (traj.waypoints.front() - traj.waypoints.back()).norm();
  if (wrap > s_tol) flag("periodicity", -1, n_slots - 1, -wrap);

  return report;
}

bool trajectory_feasible(const Scenario& sc, const Trajectory& traj, double rel_tol) {
  if (traj.slot_count() != sc.uav.slots) return false;
  const double s_max = sc.uav.max_step();
  const double s_tol = rel_tol * std::max(s_max, 1.0);
  for (int n = 0; n + 1 < traj.slot_count(); ++n) {
    if ((traj.waypoints[n + 1] - traj.waypoints[n]).norm() > s_max + s_tol) return false;
  }
  return (traj.waypoints.front() - traj.waypoints.back()).norm() <= s_tol;
}

}  // namespace uavmm
