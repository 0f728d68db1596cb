#include "oracle/oracle.hpp"

#include <cmath>

#include "doctest.h"
#include "uavmm/scenario.hpp"

using namespace uavmm;

namespace {

Scenario base_scenario(int slots) {
  Scenario sc;
  sc.uav.altitude = 500.0;
  sc.uav.v_max = 50.0;
  sc.uav.p_max = 0.1;
  sc.uav.period = 270.0;
  sc.uav.slots = slots;
  sc.uav.bandwidth = 10e6;
  sc.uav.noise_psd_dbm = -169.0;
  sc.uav.ref_gain_db = -50.0;
  return sc;
}

Trajectory hover_at(const Vec2& p, int slots) {
  Trajectory t;
  t.waypoints.assign(slots, p);
  return t;
}

Trajectory line_between(const Vec2& a, const Vec2& b, int slots) {
  Trajectory t;
  t.waypoints.resize(slots);
  for (int n = 0; n < slots; ++n) {
    const double f =
        0.5 - 0.5 * std::cos(2.0 * M_PI * n / (slots - 1));  // out and back
    t.waypoints[n] = a + f * (b - a);
  }
  t.waypoints.back() = t.waypoints.front();
  return t;
}

}  // namespace

TEST_CASE("single user: full bandwidth and power per slot is optimal") {
  Scenario sc = base_scenario(5);
  sc.users.push_back({{180.0, -60.0}, 0.0});
  Eigen::VectorXd theta(1);
  for (double target : {0.0, 0.7}) {
    theta[0] = target;
    Trajectory traj = line_between(Vec2(-200.0, 0.0), Vec2(300.0, 0.0), 5);
    const auto result = oracle::oracle_allocation(sc, traj, theta);
    REQUIRE(result.converged);
    // Closed form: alpha = 1, p = P_max in every slot.
    double avg = 0.0, worst = 1e300;
    for (int n = 0; n < 5; ++n) {
      const double r = std::log2(1.0 + sc.uav.p_max * gain_over_noise(sc, traj, 0, n));
      avg += r / 5.0;
      worst = std::min(worst, r);
    }
    const double expected = target > 0.0 ? std::min(avg, worst / target) : avg;
    CHECK(result.value == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("mirrored users split the spectrum evenly") {
  Scenario sc = base_scenario(4);
  sc.users.push_back({{-220.0, 0.0}, 0.0});
  sc.users.push_back({{220.0, 0.0}, 0.0});
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(2);
  Trajectory traj = hover_at(Vec2(0.0, 0.0), 4);
  const auto result = oracle::oracle_allocation(sc, traj, theta);
  REQUIRE(result.converged);
  const double g = gain_over_noise(sc, traj, 0, 0);
  // Equal halves: r = 0.5 log2(1 + (P/2) g / 0.5).
  const double expected = 0.5 * std::log2(1.0 + sc.uav.p_max * g);
  CHECK(result.value == doctest::Approx(expected).epsilon(1e-7));
  // Throughputs recovered from the argument are equal.
  const int kn = 2 * 4;
  double thr[2] = {0.0, 0.0};
  for (int k = 0; k < 2; ++k)
    for (int n = 0; n < 4; ++n) {
      const double a = result.argument[k * 4 + n];
      const double p = result.argument[kn + k * 4 + n];
      thr[k] += instantaneous_rate(a, p, gain_over_noise(sc, traj, k, n)) / 4.0;
    }
  CHECK(std::abs(thr[0] - thr[1]) <= 1e-7 * std::max(1.0, thr[0]));
}

TEST_CASE("the refinement reports a tight optimality bracket") {
  Scenario sc = base_scenario(6);
  sc.users.push_back({{-300.0, 120.0}, 0.4});
  sc.users.push_back({{260.0, -40.0}, 0.1});
  Eigen::VectorXd theta(2);
  theta << 0.4, 0.1;
  Trajectory traj = line_between(Vec2(-250.0, 100.0), Vec2(250.0, -50.0), 6);
  const auto result = oracle::oracle_allocation(sc, traj, theta);
  REQUIRE(result.converged);
  CHECK(result.tolerance <= 1e-6);
  CHECK(result.value > 0.0);
}

TEST_CASE("grid refinement never lowers the trajectory oracle") {
  Scenario sc = base_scenario(3);
  sc.uav.period = 30.0;
  sc.users.push_back({{150.0, 80.0}, 0.0});
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
  Allocation alloc;
  alloc.bandwidth = Eigen::MatrixXd::Ones(1, 3);
  alloc.power = Eigen::MatrixXd::Constant(1, 3, sc.uav.p_max);
  double previous = -1e300;
  for (double step : {400.0, 200.0, 100.0}) {
    const auto result = oracle::oracle_trajectory(sc, alloc, theta, step);
    REQUIRE(result.converged);
    CHECK(result.value >= previous - 1e-12);
    previous = result.value;
  }
}

TEST_CASE("central differences are exact on quadratics") {
  const auto f = [](const Eigen::VectorXd& x) {
    return 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + x[0];
  };
  Eigen::VectorXd point(2), dir(2);
  point << 0.7, -1.2;
  dir << 0.6, 0.8;
  const double analytic =
      (6.0 * point[0] - 2.0 * point[1] + 1.0) * dir[0] +
      (-2.0 * point[0] + point[1]) * dir[1];
  CHECK(oracle::finite_difference_check(f, point, dir, analytic) <= 1e-9);
}

TEST_CASE("the rate gradient in position checks out numerically") {
  Scenario sc = base_scenario(2);
  sc.users.push_back({{100.0, -50.0}, 0.0});
  const double alpha = 0.6, power = 0.05;
  const auto rate_at = [&](const Eigen::VectorXd& q) {
    Trajectory t = hover_at(Vec2(q[0], q[1]), 2);
    return instantaneous_rate(alpha, power, gain_over_noise(sc, t, 0, 0));
  };
  Eigen::VectorXd point(2), dir(2);
  point << 310.0, 95.0;
  dir << -0.8, 0.6;
  // d r / d q = -alpha * (p g / alpha) / (ln2 (1 + p g / alpha)) * 2(q-w)/(H^2+d^2)
  Trajectory t = hover_at(Vec2(point[0], point[1]), 2);
  const double g = gain_over_noise(sc, t, 0, 0);
  const double h2 = sc.uav.altitude * sc.uav.altitude;
  const double d2 = (Vec2(point[0], point[1]) - sc.users[0].position).squaredNorm();
  const double z = power * g / alpha;
  const Vec2 grad = -alpha * z / (std::log(2.0) * (1.0 + z)) *
                    (Vec2(point[0], point[1]) - sc.users[0].position) * 2.0 /
                    (h2 + d2);
  const double analytic = grad.x() * dir[0] + grad.y() * dir[1];
  CHECK(oracle::finite_difference_check(rate_at, point, dir, analytic) <= 1e-5);
}
