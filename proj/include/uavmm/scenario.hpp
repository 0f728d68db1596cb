#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace uavmm {

using Vec2 = Eigen::Vector2d;

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// One ground user: horizontal position and its minimum-rate ratio.
struct UserSpec {
  Vec2 position{0.0, 0.0};  // meters
  double mrr = 0.0;         // fraction of average throughput required per slot, in [0, 1]
};

struct UavParams {
  double altitude = 0.0;       // m, fixed flight altitude
  double v_max = 0.0;          // m/s
  double p_max = 0.0;          // W, per-slot transmit power budget
  double period = 0.0;         // s, flight period
  int slots = 0;               // N, discretization of the period
  double bandwidth = 0.0;      // Hz
  double noise_psd_dbm = 0.0;  // dBm/Hz
  double ref_gain_db = 0.0;    // dB, channel power gain at 1 m

  double slot_duration() const { return period / slots; }
  double max_step() const { return v_max * slot_duration(); }
  double ref_gain_linear() const { return std::pow(10.0, ref_gain_db / 10.0); }
  double noise_psd_w() const { return std::pow(10.0, (noise_psd_dbm - 30.0) / 10.0); }
  // Reference SNR scale: ref gain over total noise power.
  double gamma0() const { return ref_gain_linear() / (bandwidth * noise_psd_w()); }
};

struct Scenario {
  std::vector<UserSpec> users;
  UavParams uav;

  int user_count() const { return static_cast<int>(users.size()); }
  Eigen::VectorXd mrr_vector() const;

  // Throws ValidationError naming the offending field. Duplicate user
  // positions are allowed; the loader warns about them separately.
  void validate() const;
};

/// Closed periodic waypoint sequence; waypoints.front() == waypoints.back().
struct Trajectory {
  std::vector<Vec2> waypoints;

  int slot_count() const { return static_cast<int>(waypoints.size()); }
};

/// Per-user, per-slot bandwidth fractions and transmit powers (K x N).
struct Allocation {
  Eigen::MatrixXd bandwidth;
  Eigen::MatrixXd power;
};

// Free-space channel power gain (linear, dimensionless) between the UAV at
// waypoint n and user k. Indices are 0-based; throws std::out_of_range.
double channel_gain(const Scenario& sc, const Trajectory& traj, int user, int slot);

// g_k[n]: channel gain normalized by total noise power, gamma0 / (H^2 + d^2).
double gain_over_noise(const Scenario& sc, const Trajectory& traj, int user, int slot);

// alpha * log2(1 + p * g / alpha); defined as 0 when alpha == 0.
double instantaneous_rate(double alpha, double power, double gain_over_noise);

// Per-user average over slots of instantaneous_rate.
double average_throughput(const Scenario& sc, const Trajectory& traj,
                          const Allocation& alloc, int user);

struct ConstraintViolation {
  std::string name;  // e.g. "min_throughput", "mrr", "power_sum", ...
  int user = -1;     // -1 when not applicable
  int slot = -1;
  double slack = 0.0;  // negative: amount by which the constraint is violated
};

struct FeasibilityReport {
  std::vector<ConstraintViolation> violations;

  bool feasible() const { return violations.empty(); }
  double worst_slack() const;
};

// Checks (eta, alloc, traj) against all constraints of the joint problem:
// R_k >= eta, r_k[n] >= theta_k * eta, per-slot power and bandwidth budgets,
// variable boxes, speed limit, and periodicity. rel_tol scales each
// constraint's natural magnitude.
FeasibilityReport check_feasibility(const Scenario& sc, const Trajectory& traj,
                                    const Allocation& alloc, double eta,
                                    double rel_tol = 1e-6);

// Speed/periodicity check only, for trajectory generators.
bool trajectory_feasible(const Scenario& sc, const Trajectory& traj, double rel_tol = 1e-6);

}  // namespace uavmm
