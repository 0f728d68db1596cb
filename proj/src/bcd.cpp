#include "uavmm/bcd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "uavmm/sca.hpp"

namespace uavmm {

namespace {

Vec2 user_centroid(const Scenario& sc) {
  Vec2 c = Vec2::Zero();
  for (const auto& u : sc.users) c += u.position;
  return c / sc.user_count();
}

// Piecewise-linear position schedule over [0, T]: hover segments alternate
// with constant-speed flight legs.
struct Schedule {
  struct Segment {
    double start, duration;
    Vec2 from, to;
  };
  std::vector<Segment> segments;

  Vec2 at(double t) const {
    for (const auto& s : segments) {
      if (t <= s.start + s.duration) {
        const double f = s.duration > 0.0 ? (t - s.start) / s.duration : 1.0;
        return s.from + std::clamp(f, 0.0, 1.0) * (s.to - s.from);
      }
    }
    return segments.back().to;
  }
};

}  // namespace

const char* trajectory_kind_name(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Proposed: return "proposed";
    case TrajectoryKind::FlyAndHover: return "fly_and_hover";
    case TrajectoryKind::Circular: return "circular";
    case TrajectoryKind::Static: return "static";
  }
  return "unknown";
}

Trajectory initial_circular_trajectory(const Scenario& sc) {
  const int n_count = sc.uav.slots;
  const Vec2 c = user_centroid(sc);
  double r_min = 0.0;
  double theta_sum = 0.0;
  for (const auto& u : sc.users) {
    r_min = std::max(r_min, (u.position - c).norm());
    theta_sum += u.mrr;
  }
  const double r0 =
      std::min(sc.uav.v_max * sc.uav.period / (2.0 * M_PI), r_min / 2.0);
  double r_ini = (1.0 - theta_sum / sc.user_count()) * r0;
  // The continuous-speed bound V_max T / (2 pi) does not quite cover the
  // sampled chord 2 r sin(pi / (N-1)); shrink to keep every hop within S_max.
  const double chord = 2.0 * std::sin(M_PI / (n_count - 1));
  if (r_ini * chord > sc.uav.max_step()) r_ini = sc.uav.max_step() / chord;

  Trajectory out;
  out.waypoints.resize(n_count);
  for (int n = 0; n < n_count; ++n) {
    const double phi = 2.0 * M_PI * n / (n_count - 1);
    out.waypoints[n] = c + r_ini * Vec2(std::cos(phi), std::sin(phi));
  }
  out.waypoints.back() = out.waypoints.front();
  return out;
}

Eigen::VectorXd initial_mrrs(const Eigen::VectorXd& theta_targets) {
  Eigen::VectorXd out(theta_targets.size());
  for (int k = 0; k < theta_targets.size(); ++k)
    out[k] = theta_targets[k] > 0.0 ? 1.0 : 0.0;
  return out;
}

SolveReport run_bcd(const Scenario& sc, const BcdConfig& config) {
  sc.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Eigen::VectorXd theta = sc.mrr_vector();
  const Eigen::VectorXd theta_ini = initial_mrrs(theta);
  const Eigen::VectorXd theta_step = (theta_ini - theta) / config.l_max;

  SolveReport out;
  out.termination = "iteration_limit";
  Trajectory traj = initial_circular_trajectory(sc);
  Eigen::VectorXd theta_temp = theta_ini;
  AllocationSolution sol;
  Allocation incumbent;
  double prev_eta = -std::numeric_limits<double>::infinity();
  bool prev_annealed = false;

  for (int r = 0; r < config.max_outer_iterations; ++r) {
    AllocationConfig acfg = config.allocation;
    if (r > 0) acfg.incumbent = &incumbent;
    sol = solve_allocation(sc, traj, theta, acfg);
    incumbent = sol.allocation;
    out.eta_history.push_back(sol.eta);
    out.theta_temp_history.push_back(theta_temp);
    ++out.iterations;

    const bool annealed = (theta_temp - theta).cwiseAbs().maxCoeff() == 0.0;
    if (annealed && prev_annealed &&
        sol.eta - prev_eta <
            config.epsilon * std::max(1e-9, std::abs(prev_eta))) {
      out.termination = "converged";
      break;
    }
    prev_eta = sol.eta;
    prev_annealed = annealed;
    if (r + 1 == config.max_outer_iterations) break;

    Eigen::VectorXd decrement =
        config.constant_step_annealing ? theta_step : (r + 1.0) * theta_step;
    Eigen::VectorXd trial = (theta_temp - decrement).cwiseMax(theta);
    ScaResult sca = sca_loop(sc, sol.allocation, trial, traj);
    for (int attempt = 0; attempt < 5 && !sca.feasible; ++attempt) {
      decrement *= 0.5;
      trial = (theta_temp - decrement).cwiseMax(theta);
      sca = sca_loop(sc, sol.allocation, trial, traj);
    }
    if (!sca.feasible) {
      trial = theta_temp;  // give up on this decrement, keep the old MRRs
      sca = sca_loop(sc, sol.allocation, trial, traj);
    }
    theta_temp = trial;
    if (sca.feasible) traj = sca.trajectory;
  }

  out.trajectory = traj;
  out.allocation = sol.allocation;
  out.eta = sol.eta;
  out.dual_bound = sol.dual_bound;
  out.kkt = sol.kkt;
  out.wall_time = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
  return out;
}

Trajectory baseline_trajectory(const Scenario& sc, TrajectoryKind kind) {
  const int n_count = sc.uav.slots;
  switch (kind) {
    case TrajectoryKind::Static: {
      Trajectory out;
      out.waypoints.assign(n_count, user_centroid(sc));
      return out;
    }
    case TrajectoryKind::Circular:
      return initial_circular_trajectory(sc);
    case TrajectoryKind::FlyAndHover:
      break;
    case TrajectoryKind::Proposed:
      throw ValidationError(
          "trajectory kind 'proposed' is produced by run_bcd, not "
          "baseline_trajectory");
  }

  // Nearest-neighbor closed tour starting from the user nearest the centroid.
  const Vec2 c = user_centroid(sc);
  const int k_count = sc.user_count();
  std::vector<int> order;
  std::vector<bool> used(k_count, false);
  Vec2 cursor = c;
  for (int i = 0; i < k_count; ++i) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < k_count; ++k) {
      if (used[k]) continue;
      const double d = (sc.users[k].position - cursor).norm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    used[best] = true;
    order.push_back(best);
    cursor = sc.users[best].position;
  }

  double tour_length = 0.0;
  for (int i = 0; i < k_count; ++i)
    tour_length += (sc.users[order[(i + 1) % k_count]].position -
                    sc.users[order[i]].position)
                       .norm();
  // Fly at (N-1)/N of V_max so a hop between samples T/(N-1) apart never
  // exceeds S_max = V_max T / N.
  const double v_eff = sc.uav.v_max * (n_count - 1) / n_count;
  const double travel_time = tour_length / v_eff;
  if (travel_time > sc.uav.period) {
    std::ostringstream msg;
    msg << "fly_and_hover needs period >= " << travel_time
        << " s to tour all users (given " << sc.uav.period << " s)";
    throw ValidationError(msg.str());
  }
  const double hover = (sc.uav.period - travel_time) / k_count;

  Schedule sched;
  double t = 0.0;
  for (int i = 0; i < k_count; ++i) {
    const Vec2 here = sc.users[order[i]].position;
    const Vec2 next = sc.users[order[(i + 1) % k_count]].position;
    sched.segments.push_back({t, hover, here, here});
    t += hover;
    const double leg = (next - here).norm() / v_eff;
    sched.segments.push_back({t, leg, here, next});
    t += leg;
  }

  Trajectory out;
  out.waypoints.resize(n_count);
  const double dt = sc.uav.period / (n_count - 1);
  for (int n = 0; n < n_count; ++n) out.waypoints[n] = sched.at(n * dt);
  out.waypoints.back() = out.waypoints.front();
  return out;
}

SweepTable theta_sweep(const Scenario& sc, const std::vector<double>& grid,
                       SweepMode mode, const BcdConfig& config) {
  for (double t : grid)
    if (!(t >= 0.0 && t <= 1.0))
      throw ValidationError("theta grid values must lie in [0, 1]");
  SweepTable out;
  out.grid = grid;
  out.kinds = {TrajectoryKind::Proposed, TrajectoryKind::FlyAndHover,
               TrajectoryKind::Circular, TrajectoryKind::Static};
  out.cells.assign(grid.size(), std::vector<SweepCell>(out.kinds.size()));
  if (grid.empty()) return out;

  const auto homogeneous = [&](double t) {
    return with_mrrs(sc, Eigen::VectorXd::Constant(sc.user_count(), t));
  };

  // Trajectories frozen at the first grid point for FixedTrajectory mode.
  std::vector<Trajectory> frozen(out.kinds.size());
  if (mode == SweepMode::FixedTrajectory) {
    const Scenario base = homogeneous(grid.front());
    frozen[0] = run_bcd(base, config).trajectory;
    for (size_t j = 1; j < out.kinds.size(); ++j)
      frozen[j] = baseline_trajectory(base, out.kinds[j]);
  }

  const auto solve_cell = [&](size_t row, size_t col) {
    SweepCell cell;
    try {
      const Scenario scen = homogeneous(grid[row]);
      const TrajectoryKind kind = out.kinds[col];
      if (mode == SweepMode::FullBcd && kind == TrajectoryKind::Proposed) {
        cell.eta = run_bcd(scen, config).eta;
      } else {
        const Trajectory traj = mode == SweepMode::FixedTrajectory
                                    ? frozen[col]
                                    : baseline_trajectory(scen, kind);
        cell.eta =
            solve_allocation(scen, traj, scen.mrr_vector(), config.allocation)
                .eta;
      }
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    return cell;
  };

  // Bounded worker pool over rows; merged in grid order.
  const size_t workers =
      std::max<size_t>(1, std::thread::hardware_concurrency());
  for (size_t base = 0; base < grid.size(); base += workers) {
    const size_t end = std::min(grid.size(), base + workers);
    std::vector<std::future<std::vector<SweepCell>>> batch;
    for (size_t row = base; row < end; ++row)
      batch.push_back(std::async(std::launch::async, [&, row] {
        std::vector<SweepCell> cells(out.kinds.size());
        for (size_t col = 0; col < out.kinds.size(); ++col)
          cells[col] = solve_cell(row, col);
        return cells;
      }));
    for (size_t row = base; row < end; ++row)
      out.cells[row] = batch[row - base].get();
  }
  return out;
}

}  // namespace uavmm
