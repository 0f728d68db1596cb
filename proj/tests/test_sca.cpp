#include "uavmm/sca.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "oracle/oracle.hpp"
#include "uavmm/allocation.hpp"

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

Trajectory circle_at(const Vec2& c, double radius, int slots) {
  Trajectory t;
  t.waypoints.resize(slots);
  for (int n = 0; n < slots; ++n) {
    const double phi = 2.0 * M_PI * n / (slots - 1);
    t.waypoints[n] = c + radius * Vec2(std::cos(phi), std::sin(phi));
  }
  t.waypoints.back() = t.waypoints.front();
  return t;
}

Allocation uniform_allocation(const Scenario& sc, int slots) {
  const int k_count = sc.user_count();
  Allocation a;
  a.bandwidth = Eigen::MatrixXd::Constant(k_count, slots, 1.0 / k_count);
  a.power = Eigen::MatrixXd::Constant(k_count, slots, sc.uav.p_max / k_count);
  return a;
}

Scenario random_instance(std::mt19937& rng, Trajectory& traj,
                         Eigen::VectorXd& theta, Allocation& alloc) {
  std::uniform_real_distribution<double> pos(-800.0, 800.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int k_count = 1 + static_cast<int>(rng() % 3);
  const int n_count = 3 + static_cast<int>(rng() % 6);
  Scenario sc = base_scenario(n_count);
  theta.resize(k_count);
  for (int k = 0; k < k_count; ++k) {
    sc.users.push_back({{pos(rng), pos(rng)}, 0.0});
    theta[k] = (uni(rng) < 0.25) ? 0.0 : uni(rng);
    sc.users[k].mrr = theta[k];
  }
  const Vec2 center(pos(rng) / 2.0, pos(rng) / 2.0);
  const double max_hop = sc.uav.max_step();
  const double radius =
      std::min(300.0, 0.9 * max_hop / (2.0 * std::sin(M_PI / (n_count - 1))));
  traj = circle_at(center, radius, n_count);
  alloc = uniform_allocation(sc, n_count);
  // Drop some served pairs of users without an MRR (users with one must be
  // served in every slot for a positive throughput floor to exist).
  for (int k = 0; k < k_count; ++k) {
    if (theta[k] > 0.0) continue;
    for (int n = 0; n < n_count; ++n)
      if (uni(rng) < 0.2 && n % n_count != k % n_count) {
        alloc.bandwidth(k, n) = 0.0;
        alloc.power(k, n) = 0.0;
      }
  }
  return sc;
}

}  // namespace

TEST_CASE("coefficients at a unit-SNR anchor match the closed form") {
  Scenario sc = base_scenario(4);
  sc.users.push_back({{120.0, -40.0}, 0.0});
  const double h2 = sc.uav.altitude * sc.uav.altitude;
  Trajectory anchor = hover_at(sc.users[0].position, 4);
  Allocation alloc;
  alloc.bandwidth = Eigen::MatrixXd::Ones(1, 4);
  alloc.power = Eigen::MatrixXd::Constant(1, 4, h2 / sc.uav.gamma0());
  const ScaCoefficients coeffs = sca_coefficients(sc, alloc, anchor);
  for (int n = 0; n < 4; ++n) {
    CHECK(coeffs.b(0, n) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(coeffs.a(0, n) ==
          doctest::Approx(1.4426950408889634 / (2.0 * h2)).epsilon(1e-12));
  }
}

TEST_CASE("zero power or zero bandwidth yields zero coefficients") {
  Scenario sc = base_scenario(3);
  sc.users.push_back({{0.0, 0.0}, 0.0});
  Trajectory anchor = hover_at(Vec2(100.0, 100.0), 3);
  Allocation alloc;
  alloc.bandwidth = Eigen::MatrixXd::Ones(1, 3);
  alloc.power = Eigen::MatrixXd::Zero(1, 3);
  alloc.bandwidth(0, 2) = 0.0;
  const ScaCoefficients coeffs = sca_coefficients(sc, alloc, anchor);
  CHECK(coeffs.a.cwiseAbs().maxCoeff() == 0.0);
  CHECK(coeffs.b.cwiseAbs().maxCoeff() == 0.0);
  Trajectory other = hover_at(Vec2(-50.0, 20.0), 3);
  CHECK(surrogate_rate(coeffs, alloc, other, 0, 0) == 0.0);
  CHECK(surrogate_rate(coeffs, alloc, other, 0, 2) == 0.0);
}

TEST_CASE("surrogate is tangent at the anchor and a global under-estimator") {
  std::mt19937 rng(71);
  std::uniform_real_distribution<double> jump(-3000.0, 3000.0);
  for (int trial = 0; trial < 5; ++trial) {
    Trajectory traj;
    Eigen::VectorXd theta;
    Allocation alloc;
    Scenario sc = random_instance(rng, traj, theta, alloc);
    const int n_count = traj.slot_count();
    const ScaCoefficients coeffs = sca_coefficients(sc, alloc, traj);
    for (int k = 0; k < sc.user_count(); ++k)
      for (int n = 0; n < n_count; ++n) {
        const double truth = instantaneous_rate(
            alloc.bandwidth(k, n), alloc.power(k, n), gain_over_noise(sc, traj, k, n));
        CHECK(surrogate_rate(coeffs, alloc, traj, k, n) ==
              doctest::Approx(truth).epsilon(1e-12));
      }
    Trajectory moved = traj;
    for (int sample = 0; sample < 400; ++sample) {
      for (int n = 0; n < n_count; ++n)
        moved.waypoints[n] = traj.waypoints[n] + Vec2(jump(rng), jump(rng));
      moved.waypoints.back() = moved.waypoints.front();
      for (int k = 0; k < sc.user_count(); ++k)
        for (int n = 0; n < n_count; ++n) {
          const double truth =
              instantaneous_rate(alloc.bandwidth(k, n), alloc.power(k, n),
                                 gain_over_noise(sc, moved, k, n));
          CHECK(surrogate_rate(coeffs, alloc, moved, k, n) <= truth + 1e-9);
        }
    }
  }
}

TEST_CASE("surrogate gradient at the anchor matches the true rate gradient") {
  std::mt19937 rng(72);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Trajectory traj;
  Eigen::VectorXd theta;
  Allocation alloc;
  Scenario sc = random_instance(rng, traj, theta, alloc);
  const ScaCoefficients coeffs = sca_coefficients(sc, alloc, traj);
  for (int k = 0; k < sc.user_count(); ++k)
    for (int n = 0; n < traj.slot_count(); ++n) {
      if (alloc.bandwidth(k, n) <= 0.0 || alloc.power(k, n) <= 0.0) continue;
      Eigen::VectorXd point(2);
      point << traj.waypoints[n].x(), traj.waypoints[n].y();
      Eigen::VectorXd dir(2);
      dir << unit(rng), unit(rng);
      dir.normalize();
      const auto truth = [&](const Eigen::VectorXd& q) {
        Trajectory t = traj;
        t.waypoints[n] = Vec2(q[0], q[1]);
        if (n == 0) t.waypoints.back() = t.waypoints.front();
        return instantaneous_rate(alloc.bandwidth(k, n), alloc.power(k, n),
                                  gain_over_noise(sc, t, k, n));
      };
      // Surrogate gradient: -2 alpha A (q - w).
      const Vec2 grad = -2.0 * alloc.bandwidth(k, n) * coeffs.a(k, n) *
                        (traj.waypoints[n] - sc.users[k].position);
      const double analytic = grad.x() * dir[0] + grad.y() * dir[1];
      CHECK(oracle::finite_difference_check(truth, point, dir, analytic) <= 1e-5);
    }
}

TEST_CASE("single user anchored at the user stays put") {
  Scenario sc = base_scenario(6);
  sc.users.push_back({{250.0, -100.0}, 0.5});
  Eigen::VectorXd theta(1);
  theta << 0.5;
  Trajectory anchor = hover_at(sc.users[0].position, 6);
  Allocation alloc;
  alloc.bandwidth = Eigen::MatrixXd::Ones(1, 6);
  alloc.power = Eigen::MatrixXd::Constant(1, 6, sc.uav.p_max);
  const TrajectoryStep step = solve_trajectory_step(sc, alloc, theta, anchor);
  REQUIRE(step.feasible);
  const double hover_rate =
      std::log2(1.0 + sc.uav.p_max * sc.uav.gamma0() /
                          (sc.uav.altitude * sc.uav.altitude));
  CHECK(step.eta_lb == doctest::Approx(hover_rate).epsilon(1e-6));
  for (const auto& q : step.trajectory.waypoints)
    CHECK((q - sc.users[0].position).norm() <= 1.0);
}

TEST_CASE("surrogate step never falls below the anchor value") {
  std::mt19937 rng(73);
  for (int trial = 0; trial < 8; ++trial) {
    Trajectory traj;
    Eigen::VectorXd theta;
    Allocation alloc;
    Scenario sc = random_instance(rng, traj, theta, alloc);
    const ScaCoefficients coeffs = sca_coefficients(sc, alloc, traj);
    const double anchor_eta = surrogate_eta(sc, coeffs, alloc, traj, theta);
    const TrajectoryStep step = solve_trajectory_step(sc, alloc, theta, traj);
    REQUIRE(step.feasible);
    CHECK(step.eta_lb >= anchor_eta - 1e-8);
    CHECK(trajectory_feasible(sc, step.trajectory));
  }
}

TEST_CASE("re-anchored steps are monotone and the loop reports a lower bound") {
  std::mt19937 rng(74);
  for (int trial = 0; trial < 4; ++trial) {
    Trajectory traj;
    Eigen::VectorXd theta;
    Allocation alloc;
    Scenario sc = random_instance(rng, traj, theta, alloc);
    Trajectory anchor = traj;
    double prev = -1e300;
    for (int iter = 0; iter < 6; ++iter) {
      const TrajectoryStep step = solve_trajectory_step(sc, alloc, theta, anchor);
      REQUIRE(step.feasible);
      CHECK(step.eta_lb >= prev - 1e-8);
      prev = step.eta_lb;
      anchor = step.trajectory;
    }
    const ScaResult res = sca_loop(sc, alloc, theta, traj);
    REQUIRE(res.feasible);
    CHECK(res.eta >= res.eta_lb - 1e-9);
    CHECK(trajectory_feasible(sc, res.trajectory));
  }
}

TEST_CASE("single distant user pulls the trajectory toward it") {
  Scenario sc = base_scenario(8);
  sc.users.push_back({{0.0, 0.0}, 0.0});
  Eigen::VectorXd theta(1);
  theta.setZero();
  Trajectory initial = hover_at(Vec2(600.0, 0.0), 8);
  Allocation alloc;
  alloc.bandwidth = Eigen::MatrixXd::Ones(1, 8);
  alloc.power = Eigen::MatrixXd::Constant(1, 8, sc.uav.p_max);
  const double eta0 = achieved_eta(sc, initial, alloc, theta);
  const ScaResult res = sca_loop(sc, alloc, theta, initial);
  REQUIRE(res.feasible);
  CHECK(res.eta > eta0);
  double worst = 0.0;
  for (const auto& q : res.trajectory.waypoints)
    worst = std::max(worst, q.norm());
  CHECK(worst < 600.0);
}

TEST_CASE("full MRR collapses a two-user trajectory") {
  Scenario sc = base_scenario(9);
  sc.users.push_back({{-300.0, 0.0}, 1.0});
  sc.users.push_back({{300.0, 0.0}, 1.0});
  Eigen::VectorXd theta(2);
  theta.setOnes();
  Trajectory initial = circle_at(Vec2(0.0, 0.0), 250.0, 9);
  Allocation alloc = uniform_allocation(sc, 9);
  const auto spread = [](const Trajectory& t) {
    double worst = 0.0;
    for (const auto& a : t.waypoints)
      for (const auto& b : t.waypoints) worst = std::max(worst, (a - b).norm());
    return worst;
  };
  const ScaResult res = sca_loop(sc, alloc, theta, initial);
  REQUIRE(res.feasible);
  CHECK(spread(res.trajectory) < spread(initial));
}

TEST_CASE("grid oracle confirms the surrogate loop result on a tiny instance") {
  Scenario sc = base_scenario(3);
  sc.uav.period = 30.0;
  sc.users.push_back({{200.0, 100.0}, 0.0});
  Eigen::VectorXd theta(1);
  theta.setZero();
  Allocation alloc;
  alloc.bandwidth = Eigen::MatrixXd::Ones(1, 3);
  alloc.power = Eigen::MatrixXd::Constant(1, 3, sc.uav.p_max);
  Trajectory initial = hover_at(Vec2(0.0, 0.0), 3);
  const ScaResult res = sca_loop(sc, alloc, theta, initial);
  REQUIRE(res.feasible);
  const auto coarse = oracle::oracle_trajectory(sc, alloc, theta, 250.0);
  const auto fine = oracle::oracle_trajectory(sc, alloc, theta, 125.0);
  REQUIRE(coarse.converged);
  REQUIRE(fine.converged);
  CHECK(fine.value >= coarse.value - 1e-12);  // grid refinement monotone
  CHECK(fine.value >= res.eta - 1e-6);        // oracle is global
  CHECK(res.eta >= fine.value - 0.05);        // and the loop gets close
}
