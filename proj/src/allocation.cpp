#include "uavmm/allocation.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

#include "uavmm/ellipsoid.hpp"
#include "uavmm/lp.hpp"

namespace uavmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.6931471805599453;
constexpr double kBetaFloor = 1e-12;
constexpr double kDensityCapFactor = 1e3;  // primal-recovery clip, in P_max units
constexpr double kNormalizationTol = 1e-5;

Eigen::MatrixXd gain_matrix(const Scenario& sc, const Trajectory& traj) {
  const int k_count = sc.user_count();
  const int n_count = traj.slot_count();
  Eigen::MatrixXd g(k_count, n_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) g(k, n) = gain_over_noise(sc, traj, k, n);
  return g;
}

// Clip negatives and rescale (lambda, mu) so the eta column vanishes exactly.
DualState project(const DualState& dual, const Eigen::VectorXd& theta) {
  DualState out = dual;
  out.lambda = out.lambda.cwiseMax(0.0);
  out.mu = out.mu.cwiseMax(0.0);
  out.beta = out.beta.cwiseMax(0.0);
  out.nu = out.nu.cwiseMax(0.0);
  const double s = out.lambda.sum() + (theta.asDiagonal() * out.mu).sum();
  if (s > 1e-9) {
    out.lambda /= s;
    out.mu /= s;
  } else {
    out.lambda.setConstant(1.0 / out.lambda.size());
    out.mu.setZero();
  }
  return out;
}

Eigen::MatrixXd density_matrix(const DualState& dual, const Eigen::MatrixXd& gains,
                               double cap) {
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  Eigen::MatrixXd p(k_count, n_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n)
      p(k, n) = std::min(cap, waterfill_power_density(dual.lambda[k], dual.mu(k, n),
                                                      dual.beta[n], gains(k, n),
                                                      n_count));
  return p;
}

// Problem (23): with densities fixed, bandwidth shares and eta form an LP
// whose row prices estimate the dual multipliers.
std::optional<AllocationSolution> lp_recover(const Scenario& sc,
                                             const Eigen::VectorXd& theta,
                                             const Eigen::MatrixXd& gains,
                                             const Eigen::MatrixXd& ptilde) {
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  Eigen::MatrixXd rate(k_count, n_count);  // log2(1 + ptilde g), per unit share
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n)
      rate(k, n) = std::log2(1.0 + ptilde(k, n) * gains(k, n));
  // A zero-rate slot under theta > 0 pins eta at zero; not a useful recovery.
  for (int k = 0; k < k_count; ++k)
    if (theta[k] > 0.0 && rate.row(k).minCoeff() <= 1e-15) return std::nullopt;

  int mrr_rows = 0;
  for (int k = 0; k < k_count; ++k)
    if (theta[k] > 0.0) mrr_rows += n_count;
  const int num_vars = 1 + k_count * n_count;
  const int num_rows = k_count + mrr_rows + 2 * n_count;
  const auto col = [&](int k, int n) { return 1 + k * n_count + n; };

  LinearProgram lp;
  lp.objective = Eigen::VectorXd::Zero(num_vars);
  lp.objective[0] = 1.0;
  lp.constraints = Eigen::MatrixXd::Zero(num_rows, num_vars);
  lp.rhs = Eigen::VectorXd::Zero(num_rows);
  lp.lower = Eigen::VectorXd::Zero(num_vars);
  lp.upper = Eigen::VectorXd::Ones(num_vars);
  lp.lower[0] = -kInf;
  lp.upper[0] = kInf;

  int row = 0;
  for (int k = 0; k < k_count; ++k, ++row) {
    lp.constraints(row, 0) = 1.0;
    for (int n = 0; n < n_count; ++n)
      lp.constraints(row, col(k, n)) = -rate(k, n) / n_count;
  }
  Eigen::MatrixXi mrr_row = Eigen::MatrixXi::Constant(k_count, n_count, -1);
  for (int k = 0; k < k_count; ++k) {
    if (theta[k] <= 0.0) continue;
    for (int n = 0; n < n_count; ++n, ++row) {
      lp.constraints(row, 0) = theta[k];
      lp.constraints(row, col(k, n)) = -rate(k, n);
      mrr_row(k, n) = row;
    }
  }
  const int band_row0 = row;
  for (int n = 0; n < n_count; ++n, ++row) {
    for (int k = 0; k < k_count; ++k) lp.constraints(row, col(k, n)) = 1.0;
    lp.rhs[row] = 1.0;
  }
  const int power_row0 = row;
  for (int n = 0; n < n_count; ++n, ++row) {
    for (int k = 0; k < k_count; ++k)
      lp.constraints(row, col(k, n)) = ptilde(k, n);
    lp.rhs[row] = sc.uav.p_max;
  }

  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::Optimal) return std::nullopt;

  AllocationSolution out;
  out.allocation.bandwidth.resize(k_count, n_count);
  out.allocation.power.resize(k_count, n_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) {
      const double a = std::clamp(sol.x[col(k, n)], 0.0, 1.0);
      out.allocation.bandwidth(k, n) = a;
      out.allocation.power(k, n) = a * ptilde(k, n);
    }
  out.dual.lambda = sol.row_duals.head(k_count).cwiseMax(0.0);
  out.dual.mu = Eigen::MatrixXd::Zero(k_count, n_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n)
      if (mrr_row(k, n) >= 0)
        out.dual.mu(k, n) = std::max(0.0, sol.row_duals[mrr_row(k, n)]);
  out.dual.nu = sol.row_duals.segment(band_row0, n_count).cwiseMax(0.0);
  out.dual.beta = sol.row_duals.segment(power_row0, n_count).cwiseMax(0.0);
  out.lp_solves = 1;
  return out;
}

// Column-pool variant of the recovery LP: each user-slot pair offers several
// candidate densities and the LP splits the pair's bandwidth among them. The
// piecewise-linear inner approximation of the concave rate tightens as
// columns accumulate, so pricing fresh water-filling columns at the row
// duals converges to the exact optimum (Dantzig-Wolfe on problem (15)).
std::optional<AllocationSolution> lp_recover_pool(
    const Scenario& sc, const Eigen::VectorXd& theta,
    const Eigen::MatrixXd& gains, std::vector<std::vector<double>>& pool) {
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  std::vector<int> offset(k_count * n_count + 1, 0);
  for (int i = 0; i < k_count * n_count; ++i)
    offset[i + 1] = offset[i] + static_cast<int>(pool[i].size());
  const int num_cols = offset.back();
  if (num_cols == 0) return std::nullopt;

  // Per-unit-share rates of every candidate; a theta > 0 user needs at least
  // one positive-rate candidate in every slot or eta is pinned at zero.
  std::vector<std::vector<double>> rate(k_count * n_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) {
      const auto& cell = pool[k * n_count + n];
      auto& r = rate[k * n_count + n];
      r.reserve(cell.size());
      double top = 0.0;
      for (double pd : cell) {
        r.push_back(std::log2(1.0 + pd * gains(k, n)));
        top = std::max(top, r.back());
      }
      if (theta[k] > 0.0 && top <= 1e-15) return std::nullopt;
    }

  int mrr_rows = 0;
  for (int k = 0; k < k_count; ++k)
    if (theta[k] > 0.0) mrr_rows += n_count;
  const int num_vars = 1 + num_cols;
  const int num_rows = k_count + mrr_rows + 2 * n_count;

  LinearProgram lp;
  lp.objective = Eigen::VectorXd::Zero(num_vars);
  lp.objective[0] = 1.0;
  lp.constraints = Eigen::MatrixXd::Zero(num_rows, num_vars);
  lp.rhs = Eigen::VectorXd::Zero(num_rows);
  lp.lower = Eigen::VectorXd::Zero(num_vars);
  lp.upper = Eigen::VectorXd::Ones(num_vars);
  lp.lower[0] = -kInf;
  lp.upper[0] = kInf;

  int row = 0;
  for (int k = 0; k < k_count; ++k, ++row) {
    lp.constraints(row, 0) = 1.0;
    for (int n = 0; n < n_count; ++n) {
      const int cell = k * n_count + n;
      for (size_t j = 0; j < pool[cell].size(); ++j)
        lp.constraints(row, 1 + offset[cell] + static_cast<int>(j)) =
            -rate[cell][j] / n_count;
    }
  }
  Eigen::MatrixXi mrr_row = Eigen::MatrixXi::Constant(k_count, n_count, -1);
  for (int k = 0; k < k_count; ++k) {
    if (theta[k] <= 0.0) continue;
    for (int n = 0; n < n_count; ++n, ++row) {
      lp.constraints(row, 0) = theta[k];
      const int cell = k * n_count + n;
      for (size_t j = 0; j < pool[cell].size(); ++j)
        lp.constraints(row, 1 + offset[cell] + static_cast<int>(j)) =
            -rate[cell][j];
      mrr_row(k, n) = row;
    }
  }
  const int band_row0 = row;
  for (int n = 0; n < n_count; ++n, ++row) {
    for (int k = 0; k < k_count; ++k) {
      const int cell = k * n_count + n;
      for (size_t j = 0; j < pool[cell].size(); ++j)
        lp.constraints(row, 1 + offset[cell] + static_cast<int>(j)) = 1.0;
    }
    lp.rhs[row] = 1.0;
  }
  const int power_row0 = row;
  for (int n = 0; n < n_count; ++n, ++row) {
    for (int k = 0; k < k_count; ++k) {
      const int cell = k * n_count + n;
      for (size_t j = 0; j < pool[cell].size(); ++j)
        lp.constraints(row, 1 + offset[cell] + static_cast<int>(j)) =
            pool[cell][j];
    }
    lp.rhs[row] = sc.uav.p_max;
  }

  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::Optimal) return std::nullopt;

  AllocationSolution out;
  out.allocation.bandwidth = Eigen::MatrixXd::Zero(k_count, n_count);
  out.allocation.power = Eigen::MatrixXd::Zero(k_count, n_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) {
      const int cell = k * n_count + n;
      for (size_t j = 0; j < pool[cell].size(); ++j) {
        const double a =
            std::clamp(sol.x[1 + offset[cell] + static_cast<int>(j)], 0.0, 1.0);
        out.allocation.bandwidth(k, n) += a;
        out.allocation.power(k, n) += a * pool[cell][j];
      }
      out.allocation.bandwidth(k, n) =
          std::min(out.allocation.bandwidth(k, n), 1.0);
    }
  out.dual.lambda = sol.row_duals.head(k_count).cwiseMax(0.0);
  out.dual.mu = Eigen::MatrixXd::Zero(k_count, n_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n)
      if (mrr_row(k, n) >= 0)
        out.dual.mu(k, n) = std::max(0.0, sol.row_duals[mrr_row(k, n)]);
  out.dual.nu = sol.row_duals.segment(band_row0, n_count).cwiseMax(0.0);
  out.dual.beta = sol.row_duals.segment(power_row0, n_count).cwiseMax(0.0);
  out.lp_solves = 1;

  // Column management: keep only the columns the optimum actually uses (plus
  // one positive-rate fallback for MRR users) so the LP stays small while
  // pricing keeps adding fresh candidates.
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) {
      const int cell = k * n_count + n;
      std::vector<double> kept;
      double largest = 0.0;
      for (size_t j = 0; j < pool[cell].size(); ++j) {
        largest = std::max(largest, pool[cell][j]);
        if (sol.x[1 + offset[cell] + static_cast<int>(j)] > 1e-10)
          kept.push_back(pool[cell][j]);
      }
      if (kept.empty() && theta[k] > 0.0 && largest > 0.0)
        kept.push_back(largest);
      pool[cell] = std::move(kept);
    }
  return out;
}

// LP row prices leave beta = 0 on slots whose power row is slack, which makes
// the re-optimized water-filling explode and the dual bound useless. With
// (lambda, mu) fixed, the slot's share of the dual value collapses to the
// convex 1-D function F(beta) = beta P_max + [max_k u_hat_k(beta)]^+ (the nu
// minimization leaves only the best pair profitable); pick each slot's beta
// at the minimum of F and nu at the second-best profit.
void rebalance_slot_duals(double p_max, const Eigen::MatrixXd& gains,
                          DualState& d) {
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  for (int n = 0; n < n_count; ++n) {
    const auto profit = [&](int k, double beta) {
      const double pd = waterfill_power_density(d.lambda[k], d.mu(k, n), beta,
                                                gains(k, n), n_count);
      return pair_utility(d.lambda[k], d.mu(k, n), beta, 0.0, gains(k, n), pd,
                          n_count);
    };
    const auto slot_value = [&](double beta) {
      double top = 0.0;
      for (int k = 0; k < k_count; ++k) top = std::max(top, profit(k, beta));
      return beta * p_max + top;
    };
    double hi = 0.0;
    for (int k = 0; k < k_count; ++k)
      hi = std::max(hi, (d.lambda[k] + n_count * d.mu(k, n)) * gains(k, n) /
                            (n_count * kLn2));
    if (hi <= 0.0) continue;
    double lo = hi * 1e-15;
    for (int it = 0; it < 90; ++it) {  // golden-section on a convex function
      const double m1 = lo + 0.381966011 * (hi - lo);
      const double m2 = hi - 0.381966011 * (hi - lo);
      if (slot_value(m1) <= slot_value(m2))
        hi = m2;
      else
        lo = m1;
    }
    d.beta[n] = 0.5 * (lo + hi);
    double top = 0.0, second = 0.0;
    for (int k = 0; k < k_count; ++k) {
      const double u = profit(k, d.beta[n]);
      if (u > top) {
        second = top;
        top = u;
      } else {
        second = std::max(second, u);
      }
    }
    d.nu[n] = std::max(0.0, second);
  }
}

double trajectory_eta(const Eigen::MatrixXd& gains, const Allocation& alloc,
                      const Eigen::VectorXd& theta) {
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  double eta = kInf;
  for (int k = 0; k < k_count; ++k) {
    double avg = 0.0;
    for (int n = 0; n < n_count; ++n) {
      const double r = instantaneous_rate(alloc.bandwidth(k, n), alloc.power(k, n),
                                          gains(k, n));
      avg += r;
      if (theta[k] > 0.0) eta = std::min(eta, r / theta[k]);
    }
    eta = std::min(eta, avg / n_count);
  }
  return std::isfinite(eta) ? eta : 0.0;
}

Eigen::VectorXd normalization_direction(const Eigen::VectorXd& theta, int slots) {
  const int k_count = static_cast<int>(theta.size());
  DualState d = DualState::zeros(k_count, slots);
  d.lambda.setOnes();
  for (int k = 0; k < k_count; ++k) d.mu.row(k).setConstant(theta[k]);
  return d.pack();
}

KktReport kkt_report(const Scenario& sc, const Trajectory& traj,
                     const Eigen::MatrixXd& gains, const Eigen::VectorXd& theta,
                     const AllocationSolution& sol) {
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  KktReport rep;
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) {
      const double a = sol.allocation.bandwidth(k, n);
      const double p = sol.allocation.power(k, n);
      if (a <= 1e-9 || p <= 1e-12) continue;
      const double pd = p / a;
      const double marginal = (sol.dual.lambda[k] + n_count * sol.dual.mu(k, n)) *
                              gains(k, n) /
                              (n_count * kLn2 * (1.0 + pd * gains(k, n)));
      rep.stationarity = std::max(
          rep.stationarity, std::abs(marginal - sol.dual.beta[n]) /
                                (1.0 + sol.dual.beta[n]));
    }
  const FeasibilityReport feas =
      check_feasibility(with_mrrs(sc, theta), traj, sol.allocation, sol.eta);
  for (const auto& v : feas.violations)
    rep.primal = std::max(rep.primal, -v.slack);
  for (int k = 0; k < k_count; ++k) {
    double avg = 0.0;
    for (int n = 0; n < n_count; ++n)
      avg += instantaneous_rate(sol.allocation.bandwidth(k, n),
                                sol.allocation.power(k, n), gains(k, n));
    avg /= n_count;
    rep.complementarity = std::max(
        rep.complementarity, std::abs(sol.dual.lambda[k] * (avg - sol.eta)));
  }
  for (int n = 0; n < n_count; ++n) {
    const double psum = sol.allocation.power.col(n).sum();
    const double asum = sol.allocation.bandwidth.col(n).sum();
    rep.complementarity = std::max(
        rep.complementarity, std::abs(sol.dual.beta[n] * (sc.uav.p_max - psum)));
    rep.complementarity = std::max(
        rep.complementarity, std::abs(sol.dual.nu[n] * (1.0 - asum)));
    for (int k = 0; k < k_count; ++k) {
      const double r = instantaneous_rate(sol.allocation.bandwidth(k, n),
                                          sol.allocation.power(k, n), gains(k, n));
      rep.complementarity =
          std::max(rep.complementarity,
                   std::abs(sol.dual.mu(k, n) * (r - theta[k] * sol.eta)));
    }
  }
  return rep;
}

// Active-set Newton refinement of the KKT system. The converged phases land
// within ~1e-5 of the optimum in the primal-dual arguments (the value gap is
// far tighter), close enough that the binding pattern is reliable; solving
// the square stationarity/feasibility system to machine precision makes the
// water-filling identity hold exactly in the reported solution. Unknowns and
// equations pair off: (density, share) per served pair against the two
// stationarity conditions, eta against the normalization, and each active
// multiplier against its binding constraint.
std::optional<AllocationSolution> newton_polish(const Scenario& sc,
                                                const Eigen::VectorXd& theta,
                                                const Eigen::MatrixXd& gains,
                                                const AllocationSolution& start) {
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  std::vector<std::pair<int, int>> served;
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n)
      if (start.allocation.bandwidth(k, n) > 1e-7 &&
          start.allocation.power(k, n) > 1e-10)
        served.emplace_back(k, n);
  const int s_count = static_cast<int>(served.size());
  if (s_count == 0) return std::nullopt;

  std::vector<int> lam_idx(k_count, -1), beta_idx(n_count, -1),
      nu_idx(n_count, -1);
  Eigen::MatrixXi mu_idx = Eigen::MatrixXi::Constant(k_count, n_count, -1);
  std::vector<char> slot_served(n_count, 0);
  for (const auto& [k, n] : served) slot_served[n] = 1;
  int dim = 2 * s_count + 1;  // densities, shares, eta
  const int eta_idx = 2 * s_count;
  for (int k = 0; k < k_count; ++k)
    if (start.dual.lambda[k] > 1e-9) lam_idx[k] = dim++;
  for (const auto& [k, n] : served)
    if (theta[k] > 0.0 && start.dual.mu(k, n) > 1e-9) mu_idx(k, n) = dim++;
  for (int n = 0; n < n_count; ++n)
    if (slot_served[n]) beta_idx[n] = dim++;
  for (int n = 0; n < n_count; ++n)
    if (slot_served[n] && start.allocation.bandwidth.col(n).sum() > 1.0 - 1e-6)
      nu_idx[n] = dim++;

  Eigen::VectorXd x(dim);
  for (int i = 0; i < s_count; ++i) {
    const auto& [k, n] = served[i];
    x[i] = start.allocation.power(k, n) / start.allocation.bandwidth(k, n);
    x[s_count + i] = start.allocation.bandwidth(k, n);
  }
  x[eta_idx] = start.eta;
  for (int k = 0; k < k_count; ++k)
    if (lam_idx[k] >= 0) x[lam_idx[k]] = start.dual.lambda[k];
  for (const auto& [k, n] : served)
    if (mu_idx(k, n) >= 0) x[mu_idx(k, n)] = start.dual.mu(k, n);
  for (int n = 0; n < n_count; ++n) {
    if (beta_idx[n] >= 0) x[beta_idx[n]] = std::max(start.dual.beta[n], 1e-9);
    if (nu_idx[n] >= 0) x[nu_idx[n]] = std::max(start.dual.nu[n], 0.0);
  }

  const auto residual = [&](const Eigen::VectorXd& v) {
    const auto lam = [&](int k) { return lam_idx[k] < 0 ? 0.0 : v[lam_idx[k]]; };
    const auto mu = [&](int k, int n) {
      return mu_idx(k, n) < 0 ? 0.0 : v[mu_idx(k, n)];
    };
    const auto beta = [&](int n) { return beta_idx[n] < 0 ? 0.0 : v[beta_idx[n]]; };
    const auto nu = [&](int n) { return nu_idx[n] < 0 ? 0.0 : v[nu_idx[n]]; };
    Eigen::VectorXd f(dim);
    int row = 0;
    Eigen::VectorXd user_avg = Eigen::VectorXd::Zero(k_count);
    Eigen::VectorXd slot_band = Eigen::VectorXd::Zero(n_count);
    Eigen::VectorXd slot_power = Eigen::VectorXd::Zero(n_count);
    for (int i = 0; i < s_count; ++i) {
      const auto& [k, n] = served[i];
      const double pd = v[i];
      const double a = v[s_count + i];
      const double g = gains(k, n);
      const double w = lam(k) / n_count + mu(k, n);
      const double r_share = std::log2(1.0 + pd * g);
      f[row++] = w * g / (kLn2 * (1.0 + pd * g)) - beta(n);
      f[row++] = w * r_share - beta(n) * pd - nu(n);
      user_avg[k] += a * r_share / n_count;
      slot_band[n] += a;
      slot_power[n] += a * pd;
    }
    const double eta = v[eta_idx];
    for (int k = 0; k < k_count; ++k)
      if (lam_idx[k] >= 0) f[row++] = user_avg[k] - eta;
    for (const auto& [k, n] : served)
      if (mu_idx(k, n) >= 0) {
        int i = 0;
        while (served[i] != std::make_pair(k, n)) ++i;
        f[row++] = v[s_count + i] * std::log2(1.0 + v[i] * gains(k, n)) -
                   theta[k] * eta;
      }
    for (int n = 0; n < n_count; ++n)
      if (beta_idx[n] >= 0) f[row++] = slot_power[n] - sc.uav.p_max;
    for (int n = 0; n < n_count; ++n)
      if (nu_idx[n] >= 0) f[row++] = slot_band[n] - 1.0;
    double norm_sum = -1.0;
    for (int k = 0; k < k_count; ++k) norm_sum += lam(k);
    for (const auto& [k, n] : served) norm_sum += mu(k, n) * theta[k];
    f[row++] = norm_sum;
    return f;
  };

  Eigen::VectorXd f = residual(x);
  for (int it = 0; it < 25 && f.lpNorm<Eigen::Infinity>() > 1e-13; ++it) {
    Eigen::MatrixXd jac(dim, dim);
    for (int j = 0; j < dim; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd hi = x, lo = x;
      hi[j] += h;
      lo[j] -= h;
      jac.col(j) = (residual(hi) - residual(lo)) / (2.0 * h);
    }
    const Eigen::VectorXd dx = jac.colPivHouseholderQr().solve(-f);
    if (!dx.allFinite()) return std::nullopt;
    double step = 1.0;
    bool moved = false;
    for (int t = 0; t < 30; ++t, step *= 0.5) {
      const Eigen::VectorXd xn = x + step * dx;
      const Eigen::VectorXd fn = residual(xn);
      if (fn.norm() < f.norm()) {
        x = xn;
        f = fn;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (f.lpNorm<Eigen::Infinity>() > 1e-10) return std::nullopt;
  // The structure guess must survive: positive densities and shares, no
  // multiplier driven meaningfully negative.
  for (int i = 0; i < s_count; ++i)
    if (x[i] <= 0.0 || x[s_count + i] <= 0.0 || x[s_count + i] > 1.0 + 1e-9)
      return std::nullopt;
  for (int j = eta_idx + 1; j < dim; ++j)
    if (x[j] < -1e-9) return std::nullopt;

  AllocationSolution out;
  out.allocation.bandwidth = Eigen::MatrixXd::Zero(k_count, n_count);
  out.allocation.power = Eigen::MatrixXd::Zero(k_count, n_count);
  out.dual = DualState::zeros(k_count, n_count);
  for (int i = 0; i < s_count; ++i) {
    const auto& [k, n] = served[i];
    out.allocation.bandwidth(k, n) = std::min(x[s_count + i], 1.0);
    out.allocation.power(k, n) = x[s_count + i] * x[i];
  }
  for (int k = 0; k < k_count; ++k)
    if (lam_idx[k] >= 0) out.dual.lambda[k] = std::max(0.0, x[lam_idx[k]]);
  for (const auto& [k, n] : served)
    if (mu_idx(k, n) >= 0) out.dual.mu(k, n) = std::max(0.0, x[mu_idx(k, n)]);
  for (int n = 0; n < n_count; ++n) {
    if (beta_idx[n] >= 0) out.dual.beta[n] = std::max(0.0, x[beta_idx[n]]);
    if (nu_idx[n] >= 0) out.dual.nu[n] = std::max(0.0, x[nu_idx[n]]);
  }
  out.eta = trajectory_eta(gains, out.allocation, theta);
  return out;
}

}  // namespace

DualState DualState::zeros(int users, int slots) {
  DualState d;
  d.lambda = Eigen::VectorXd::Zero(users);
  d.mu = Eigen::MatrixXd::Zero(users, slots);
  d.beta = Eigen::VectorXd::Zero(slots);
  d.nu = Eigen::VectorXd::Zero(slots);
  return d;
}

DualState DualState::initial(int users, int slots) {
  DualState d = zeros(users, slots);
  d.lambda.setConstant(1.0 / users);
  d.beta.setOnes();
  d.nu.setOnes();
  return d;
}

int DualState::dim() const {
  return static_cast<int>(lambda.size() + mu.size() + beta.size() + nu.size());
}

Eigen::VectorXd DualState::pack() const {
  Eigen::VectorXd v(dim());
  const int k_count = static_cast<int>(lambda.size());
  const int n_count = static_cast<int>(beta.size());
  v.head(k_count) = lambda;
  for (int k = 0; k < k_count; ++k)
    v.segment(k_count + k * n_count, n_count) = mu.row(k);
  v.segment(k_count + k_count * n_count, n_count) = beta;
  v.tail(n_count) = nu;
  return v;
}

DualState DualState::unpack(const Eigen::VectorXd& v, int users, int slots) {
  DualState d = zeros(users, slots);
  d.lambda = v.head(users);
  for (int k = 0; k < users; ++k)
    d.mu.row(k) = v.segment(users + k * slots, slots);
  d.beta = v.segment(users + users * slots, slots);
  d.nu = v.tail(slots);
  return d;
}

double DualState::normalization_residual(const Eigen::VectorXd& theta) const {
  return lambda.sum() + (theta.asDiagonal() * mu).sum() - 1.0;
}

double waterfill_power_density(double lambda, double mu, double beta, double gain,
                               int slots) {
  const double b = std::max(beta, kBetaFloor);
  const double level = (lambda + slots * mu) / (slots * b * kLn2);
  return std::max(0.0, level - 1.0 / gain);
}

double pair_utility(double lambda, double mu, double beta, double nu, double gain,
                    double p_tilde, int slots) {
  const double weight = (lambda + slots * mu) / slots;
  return weight * std::log2(1.0 + p_tilde * gain) - beta * p_tilde - nu;
}

int bandwidth_indicator(double lambda, double mu, double beta, double nu,
                        double gain, double p_tilde, int slots) {
  return pair_utility(lambda, mu, beta, nu, gain, p_tilde, slots) > 0.0 ? 1 : 0;
}

DualEvaluation dual_function(const Scenario& sc, const Trajectory& traj,
                             const Eigen::VectorXd& theta, const DualState& dual) {
  const Eigen::MatrixXd gains = gain_matrix(sc, traj);
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  DualEvaluation ev;
  ev.bounded = std::abs(dual.normalization_residual(theta)) <= kNormalizationTol;
  ev.maximizer.bandwidth = Eigen::MatrixXd::Zero(k_count, n_count);
  ev.maximizer.power = Eigen::MatrixXd::Zero(k_count, n_count);
  ev.value = dual.beta.sum() * sc.uav.p_max + dual.nu.sum();
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < n_count; ++n) {
      const double pd = waterfill_power_density(dual.lambda[k], dual.mu(k, n),
                                                dual.beta[n], gains(k, n), n_count);
      const double u = pair_utility(dual.lambda[k], dual.mu(k, n), dual.beta[n],
                                    dual.nu[n], gains(k, n), pd, n_count);
      if (u > 0.0) {
        ev.value += u;
        ev.maximizer.bandwidth(k, n) = 1.0;
        ev.maximizer.power(k, n) = pd;
      }
    }
  return ev;
}

DualSubgradient subgradients(const Scenario& sc, const Trajectory& traj,
                             const Eigen::VectorXd& theta, const DualState& dual,
                             const Allocation& maximizer) {
  const Eigen::MatrixXd gains = gain_matrix(sc, traj);
  const int k_count = static_cast<int>(gains.rows());
  const int n_count = static_cast<int>(gains.cols());
  DualSubgradient sg;
  sg.objective = DualState::zeros(k_count, n_count);
  for (int k = 0; k < k_count; ++k) {
    for (int n = 0; n < n_count; ++n) {
      const double r = instantaneous_rate(maximizer.bandwidth(k, n),
                                          maximizer.power(k, n), gains(k, n));
      sg.objective.mu(k, n) = r;
      sg.objective.lambda[k] += r / n_count;
    }
  }
  for (int n = 0; n < n_count; ++n) {
    sg.objective.beta[n] = sc.uav.p_max - maximizer.power.col(n).sum();
    sg.objective.nu[n] = 1.0 - maximizer.bandwidth.col(n).sum();
  }
  const double rho = dual.normalization_residual(theta);
  if (std::abs(rho) > kNormalizationTol) {
    sg.feasibility = true;
    sg.cut = (rho > 0.0 ? 1.0 : -1.0) * normalization_direction(theta, n_count);
  }
  return sg;
}

std::optional<AllocationSolution> recover_primal(const Scenario& sc,
                                                 const Trajectory& traj,
                                                 const Eigen::VectorXd& theta,
                                                 const DualState& dual) {
  const Eigen::MatrixXd gains = gain_matrix(sc, traj);
  const Eigen::MatrixXd ptilde =
      density_matrix(dual, gains, kDensityCapFactor * sc.uav.p_max);
  auto rec = lp_recover(sc, theta, gains, ptilde);
  if (!rec) return rec;
  rec->eta = trajectory_eta(gains, rec->allocation, theta);
  return rec;
}

namespace {

// With (lambda, mu) fixed, every other dual variable minimizes in closed
// form: mu rows of theta = 0 users are optimally zero and (beta, nu) come
// from rebalance_slot_duals. The dual search therefore lives in the reduced
// vector v = (lambda, mu rows of theta > 0 users).
struct ReducedSpace {
  Eigen::VectorXd theta;
  std::vector<int> active;  // users with theta > 0
  int k_count = 0;
  int n_count = 0;

  static ReducedSpace build(const Eigen::VectorXd& theta, int slots) {
    ReducedSpace rs;
    rs.theta = theta;
    rs.k_count = static_cast<int>(theta.size());
    rs.n_count = slots;
    for (int k = 0; k < rs.k_count; ++k)
      if (theta[k] > 0.0) rs.active.push_back(k);
    return rs;
  }
  int dim() const { return k_count + static_cast<int>(active.size()) * n_count; }
  // s with s . v = 1 on the normalization surface.
  Eigen::VectorXd equality() const {
    Eigen::VectorXd s(dim());
    s.head(k_count).setOnes();
    for (size_t a = 0; a < active.size(); ++a)
      s.segment(k_count + static_cast<int>(a) * n_count, n_count)
          .setConstant(theta[active[a]]);
    return s;
  }
  DualState expand(const Eigen::VectorXd& v) const {
    DualState d = DualState::zeros(k_count, n_count);
    d.lambda = v.head(k_count).cwiseMax(0.0);
    for (size_t a = 0; a < active.size(); ++a)
      d.mu.row(active[a]) =
          v.segment(k_count + static_cast<int>(a) * n_count, n_count)
              .cwiseMax(0.0)
              .transpose();
    return d;
  }
  Eigen::VectorXd reduce(const DualState& d) const {
    Eigen::VectorXd v(dim());
    v.head(k_count) = d.lambda;
    for (size_t a = 0; a < active.size(); ++a)
      v.segment(k_count + static_cast<int>(a) * n_count, n_count) =
          d.mu.row(active[a]).transpose();
    return v;
  }
  Eigen::VectorXd normalize(Eigen::VectorXd v) const {
    v = v.cwiseMax(0.0);
    const double s = equality().dot(v);
    if (s > 1e-12) {
      v /= s;
    } else {
      v.setZero();
      v.head(k_count).setConstant(1.0 / k_count);
    }
    return v;
  }
};

struct ReducedEvaluation {
  double value = 0.0;
  DualState dual;               // with the exact (beta, nu) filled in
  Allocation maximizer;
  Eigen::VectorXd subgradient;  // Danskin: rates of the inner maximizer
};

ReducedEvaluation reduced_dual_value(const ReducedSpace& rs,
                                     const Eigen::MatrixXd& gains, double p_max,
                                     const Eigen::VectorXd& v) {
  const int kc = rs.k_count;
  const int nc = rs.n_count;
  ReducedEvaluation out;
  out.dual = rs.expand(v);
  rebalance_slot_duals(p_max, gains, out.dual);
  out.maximizer.bandwidth = Eigen::MatrixXd::Zero(kc, nc);
  out.maximizer.power = Eigen::MatrixXd::Zero(kc, nc);
  out.value = out.dual.beta.sum() * p_max + out.dual.nu.sum();
  // Danskin subgradient. Pairs with zero slot utility are indifferent, and
  // the exactness of (beta, nu) forces their serving weights: the weighted
  // powers must total P_max (beta active) and the weights must total one
  // when nu > 0. Without this the subgradient carries a spurious component
  // along the minimized variables and the cuts are not valid lower bounds.
  Eigen::MatrixXd weighted_rate = Eigen::MatrixXd::Zero(kc, nc);
  Eigen::VectorXd pd(kc), util(kc);
  for (int n = 0; n < nc; ++n) {
    for (int k = 0; k < kc; ++k) {
      pd[k] = waterfill_power_density(out.dual.lambda[k], out.dual.mu(k, n),
                                      out.dual.beta[n], gains(k, n), nc);
      util[k] = pair_utility(out.dual.lambda[k], out.dual.mu(k, n),
                             out.dual.beta[n], out.dual.nu[n], gains(k, n), pd[k],
                             nc);
      if (util[k] > 0.0) {
        out.value += util[k];
        out.maximizer.bandwidth(k, n) = 1.0;
        out.maximizer.power(k, n) = pd[k];
      }
    }
    const double top = util.maxCoeff();
    const double tol = 1e-7 * (1.0 + std::abs(top) + out.dual.nu[n]);
    if (top <= tol && top + out.dual.nu[n] <= tol) continue;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(kc);
    double forced_power = 0.0;
    int forced = 0;
    std::vector<int> frees;
    for (int k = 0; k < kc; ++k) {
      if (util[k] > tol) {  // strictly profitable: weight one
        x[k] = 1.0;
        forced_power += pd[k];
        ++forced;
      } else if (util[k] > -tol && util[k] + out.dual.nu[n] > tol) {
        frees.push_back(k);  // indifferent tie, weight to be determined
      }
    }
    const double p_residual = p_max - forced_power;
    if (!frees.empty()) {
      if (out.dual.nu[n] > tol) {
        // Weights must total one and absorb the residual power.
        const double c_r = std::max(0.0, 1.0 - forced);
        if (frees.size() == 1) {
          x[frees[0]] = std::clamp(c_r, 0.0, 1.0);
        } else {
          int lo_k = frees[0], hi_k = frees[0];
          for (int k : frees) {
            if (pd[k] < pd[lo_k]) lo_k = k;
            if (pd[k] > pd[hi_k]) hi_k = k;
          }
          const double span = pd[hi_k] - pd[lo_k];
          if (span > 1e-14) {
            x[lo_k] = std::clamp((c_r * pd[hi_k] - p_residual) / span, 0.0, c_r);
            x[hi_k] = c_r - x[lo_k];
          } else {
            for (int k : frees)
              x[k] = c_r / static_cast<double>(frees.size());
          }
        }
      } else {
        // Only the power balance binds: fill greedily.
        double remaining = std::max(0.0, p_residual);
        for (int k : frees) {
          if (pd[k] <= 1e-14) continue;
          x[k] = std::clamp(remaining / pd[k], 0.0, 1.0);
          remaining -= x[k] * pd[k];
        }
      }
    }
    for (int k = 0; k < kc; ++k)
      if (x[k] > 0.0)
        weighted_rate(k, n) = x[k] * std::log2(1.0 + pd[k] * gains(k, n));
  }
  out.subgradient = Eigen::VectorXd::Zero(rs.dim());
  for (int k = 0; k < kc; ++k) out.subgradient[k] = weighted_rate.row(k).sum() / nc;
  for (size_t a = 0; a < rs.active.size(); ++a)
    out.subgradient.segment(kc + static_cast<int>(a) * nc, nc) =
        weighted_rate.row(rs.active[a]).transpose();
  return out;
}

}  // namespace

AllocationSolution solve_allocation(const Scenario& sc, const Trajectory& traj,
                                    const Eigen::VectorXd& theta,
                                    const AllocationConfig& config) {
  const int k_count = sc.user_count();
  const int n_count = traj.slot_count();
  if (theta.size() != k_count)
    throw ValidationError("solve_allocation: theta size does not match users");
  const Eigen::MatrixXd gains = gain_matrix(sc, traj);
  const double density_cap = kDensityCapFactor * sc.uav.p_max;
  const ReducedSpace rs = ReducedSpace::build(theta, n_count);
  const int dim = rs.dim();
  const Eigen::VectorXd s_eq = rs.equality();

  AllocationSolution best;
  best.allocation.bandwidth = Eigen::MatrixXd::Zero(k_count, n_count);
  best.allocation.power = Eigen::MatrixXd::Zero(k_count, n_count);
  best.dual = project(DualState::initial(k_count, n_count), theta);

  double ub = kInf;
  std::optional<DualState> ub_dual;
  int lp_solves = 0;
  int ellipsoid_iterations = 0;
  const auto gap_closed = [&]() {
    return ub - best.eta <= config.gap_tol * std::max(1.0, std::abs(best.eta));
  };
  // Evaluates the reduced dual at v, keeps the best upper bound.
  const auto evaluate = [&](const Eigen::VectorXd& v) {
    ReducedEvaluation ev = reduced_dual_value(rs, gains, sc.uav.p_max, v);
    if (ev.value < ub) {
      ub = ev.value;
      ub_dual = ev.dual;
    }
    return ev;
  };
  // LP primal recovery from the reduced point's densities.
  const auto recover = [&](const DualState& d) {
    auto rec = lp_recover(sc, theta, gains, density_matrix(d, gains, density_cap));
    if (!rec) return false;
    ++lp_solves;
    rec->eta = trajectory_eta(gains, rec->allocation, theta);
    if (rec->eta > best.eta) {
      best.eta = rec->eta;
      best.allocation = rec->allocation;
      best.dual = project(rec->dual, theta);
      return true;
    }
    return false;
  };

  // Phase 1 -- water-filling / LP alternation: densities from the current
  // multipliers, shares and refreshed multipliers from the recovery LP. Exact
  // at a fixed point; oscillating instances hand over to the bundle phase.
  Eigen::MatrixXd ptilde;
  if (config.warm_start) {
    ptilde = density_matrix(project(*config.warm_start, theta), gains, density_cap);
  } else if (config.incumbent) {
    ptilde = Eigen::MatrixXd::Constant(k_count, n_count, sc.uav.p_max);
    for (int k = 0; k < k_count; ++k)
      for (int n = 0; n < n_count; ++n)
        if (config.incumbent->bandwidth(k, n) > 1e-9)
          ptilde(k, n) =
              config.incumbent->power(k, n) / config.incumbent->bandwidth(k, n);
  } else {
    ptilde = Eigen::MatrixXd::Constant(k_count, n_count, sc.uav.p_max);
  }

  Eigen::VectorXd center = rs.reduce(best.dual);
  const int alternation_cap = std::min(config.refinement_cap, 16);
  for (int iter = 0; iter < alternation_cap && !gap_closed(); ++iter) {
    auto rec = lp_recover(sc, theta, gains, ptilde);
    if (!rec) break;
    ++lp_solves;
    rec->eta = trajectory_eta(gains, rec->allocation, theta);
    center = rs.normalize(rs.reduce(rec->dual));
    const ReducedEvaluation ev = evaluate(center);
    if (rec->eta > best.eta) {
      best.eta = rec->eta;
      best.allocation = rec->allocation;
      best.dual = ev.dual;
    }
    if (gap_closed()) break;
    Eigen::MatrixXd next = density_matrix(ev.dual, gains, density_cap);
    if ((next - ptilde).norm() <= 1e-12 * (1.0 + ptilde.norm())) break;
    ptilde = next;
  }

  // Phase 2 -- trust-region cutting-plane descent on the reduced dual. Each
  // cut t >= value_j + sigma_j . (v - v_j) under-estimates the dual, so the
  // master LP (minimize t on the normalization surface, inside the box
  // trust region) proposes the next query point.
  if (!gap_closed()) {
    struct Cut {
      Eigen::VectorXd sigma;
      double rhs;  // sigma . v_j - value_j
    };
    std::vector<Cut> cuts;
    ReducedEvaluation ev_c = evaluate(center);
    double val_c = ev_c.value;
    recover(ev_c.dual);
    cuts.push_back({ev_c.subgradient, ev_c.subgradient.dot(center) - val_c});
    double radius = 0.5;
    const int master_budget = 400;
    for (int master = 0; master < master_budget && !gap_closed(); ++master) {
      LinearProgram lp;
      const int nv = 1 + dim;
      lp.objective = Eigen::VectorXd::Zero(nv);
      lp.objective[0] = -1.0;  // minimize t
      lp.constraints = Eigen::MatrixXd::Zero(static_cast<int>(cuts.size()) + 2, nv);
      lp.rhs = Eigen::VectorXd::Zero(static_cast<int>(cuts.size()) + 2);
      for (size_t j = 0; j < cuts.size(); ++j) {
        const int row = static_cast<int>(j);
        lp.constraints(row, 0) = -1.0;
        lp.constraints.row(row).tail(dim) = cuts[j].sigma.transpose();
        lp.rhs[row] = cuts[j].rhs;
      }
      const int eq0 = static_cast<int>(cuts.size());
      lp.constraints.row(eq0).tail(dim) = s_eq.transpose();
      lp.rhs[eq0] = 1.0;
      lp.constraints.row(eq0 + 1).tail(dim) = -s_eq.transpose();
      lp.rhs[eq0 + 1] = -1.0;
      lp.lower = Eigen::VectorXd::Zero(nv);
      lp.upper = Eigen::VectorXd::Zero(nv);
      lp.upper[0] = ub;
      lp.lower.tail(dim) = (center.array() - radius).max(0.0);
      lp.upper.tail(dim) = center.array() + radius;
      const LpSolution sol = solve_lp(lp);
      if (sol.status != LpStatus::Optimal) break;
      const double model = sol.x[0];
      const Eigen::VectorXd v_hat = rs.normalize(sol.x.tail(dim));
      const double predicted = val_c - model;
      const double scale = std::max(1.0, std::abs(val_c));
      if (predicted <= 0.1 * config.gap_tol * scale) {
        // Model optimal at the center; widen if the trust region binds.
        const bool on_box =
            ((sol.x.tail(dim) - lp.upper.tail(dim)).cwiseAbs().minCoeff() < 1e-9) ||
            ((sol.x.tail(dim) - lp.lower.tail(dim)).cwiseAbs().minCoeff() < 1e-9 &&
             lp.lower.tail(dim).maxCoeff() > 0.0);
        if (on_box && radius < 64.0) {
          radius *= 4.0;
          continue;
        }
        recover(ev_c.dual);
        break;
      }
      const ReducedEvaluation ev_h = evaluate(v_hat);
      cuts.push_back({ev_h.subgradient, ev_h.subgradient.dot(v_hat) - ev_h.value});
      if (val_c - ev_h.value >= 0.3 * predicted) {  // serious step
        center = v_hat;
        ev_c = ev_h;
        val_c = ev_h.value;
        radius = std::min(radius * 1.6, 64.0);
        recover(ev_h.dual);
      } else {  // null step: tighten locality, keep refining the model
        radius = std::max(radius * 0.85, 1e-7);
        if (master % 10 == 9) recover(ev_h.dual);
      }
      if (cuts.size() > 140) cuts.erase(cuts.begin(), cuts.begin() + 30);
    }
  }

  // Phase 3 -- reduced-space ellipsoid backstop for small duals when the
  // bundle left the gap open.
  if (!gap_closed() && dim <= 120) {
    Ellipsoid localizer = Ellipsoid::ball(center, 2.0 * std::sqrt(double(dim)));
    const int cap = config.iteration_cap_factor * dim;
    int plateau = 0;
    while (ellipsoid_iterations < cap) {
      ++ellipsoid_iterations;
      const Eigen::VectorXd& c = localizer.center;
      Eigen::VectorXd cut;
      int neg = -1;
      c.minCoeff(&neg);
      const double rho = s_eq.dot(c.cwiseMax(0.0)) - 1.0;
      if (c[neg] < -1e-9) {
        cut = Eigen::VectorXd::Zero(dim);
        cut[neg] = -1.0;
      } else if (std::abs(rho) > kNormalizationTol) {
        cut = (rho > 0.0 ? 1.0 : -1.0) * s_eq;
      } else {
        const Eigen::VectorXd v = rs.normalize(c);
        const double before = ub;
        const ReducedEvaluation ev = evaluate(v);
        const bool improved = ev.value < before;
        plateau = improved ? 0 : plateau + 1;
        cut = ev.subgradient;
        if (improved || ellipsoid_iterations % 25 == 0) recover(ev.dual);
        if (gap_closed() || plateau > config.plateau_limit) break;
      }
      if (cut.norm() < 1e-14) break;
      try {
        localizer = ellipsoid_step(localizer, cut);
      } catch (const std::exception&) {
        break;  // localizer lost definiteness; the bound so far stands
      }
      if (localizer.diameter_bound() < config.diameter_tol) break;
    }
  }

  // Phase 4 -- column-generation polish. A single water-filling density per
  // pair cannot express optima that tie between serving configurations (the
  // degenerate-mu case), so the recovery stalls a few 1e-5 below the bound.
  // The pool LP mixes candidate densities per pair; fresh columns priced at
  // its row duals close the remaining gap exactly.
  std::optional<DualState> polish_dual;
  const bool deep = k_count * n_count <= config.polish_cell_cap;
  if (deep && ub_dual && !gap_closed()) {
    std::vector<std::vector<double>> pool(k_count * n_count);
    const auto add_columns = [&](const Eigen::MatrixXd& pt) {
      bool fresh = false;
      for (int k = 0; k < k_count; ++k)
        for (int n = 0; n < n_count; ++n) {
          const double v = pt(k, n);
          if (!(v > 0.0)) continue;
          auto& cell = pool[k * n_count + n];
          bool known = false;
          for (double c : cell)
            if (std::abs(c - v) <= 1e-11 * (1.0 + v)) {
              known = true;
              break;
            }
          if (!known) {
            cell.push_back(v);
            fresh = true;
          }
        }
      return fresh;
    };
    // Seed with the bound's densities, the incumbent primal's densities, and
    // a capped column so MRR users are never rate-starved in any slot.
    add_columns(density_matrix(*ub_dual, gains, density_cap));
    {
      Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(k_count, n_count);
      for (int k = 0; k < k_count; ++k)
        for (int n = 0; n < n_count; ++n)
          if (best.allocation.bandwidth(k, n) > 1e-12)
            seed(k, n) =
                best.allocation.power(k, n) / best.allocation.bandwidth(k, n);
      add_columns(seed);
      for (int k = 0; k < k_count; ++k)
        if (theta[k] > 0.0) seed.row(k).setConstant(density_cap);
      add_columns(seed);
    }
    // Polish past the nominal gap target: the KKT residuals scale like the
    // square root of the gap (strict concavity), so aim a few orders deeper.
    const auto polished = [&]() {
      return ub - best.eta <= std::min(config.gap_tol, 1e-12) *
                                  std::max(1.0, std::abs(best.eta));
    };
    for (int it = 0; it < 60 && !polished(); ++it) {
      auto rec = lp_recover_pool(sc, theta, gains, pool);
      if (!rec) break;
      ++lp_solves;
      polish_dual = rec->dual;  // complementary to the pool primal
      rec->eta = trajectory_eta(gains, rec->allocation, theta);
      if (rec->eta > best.eta) {
        best.eta = rec->eta;
        best.allocation = rec->allocation;
        best.dual = project(rec->dual, theta);
      }
      if (polished()) break;
      // Exact pricing at the LP's own prices, plus the re-optimized dual's
      // densities (the evaluation also refreshes the upper bound).
      bool fresh = add_columns(density_matrix(rec->dual, gains, density_cap));
      const ReducedEvaluation ev = evaluate(rs.normalize(rs.reduce(rec->dual)));
      fresh = add_columns(density_matrix(ev.dual, gains, density_cap)) || fresh;
      if (!fresh) break;
    }
  }

  double inc_eta = -kInf;
  if (config.incumbent) {
    inc_eta = trajectory_eta(gains, *config.incumbent, theta);
    if (inc_eta > best.eta) {
      best.eta = inc_eta;
      best.allocation = *config.incumbent;
    }
  }
  best.dual_bound = std::max(ub, best.eta);
  best.lp_solves = lp_solves;
  best.ellipsoid_iterations = ellipsoid_iterations;
  // Report whichever normalized dual certifies the primal more tightly: the
  // last incumbent's prices, the polish LP's prices, or the dual behind the
  // best upper bound.
  best.kkt = kkt_report(sc, traj, gains, theta, best);
  const auto worst = [](const KktReport& r) {
    return std::max({r.stationarity, r.primal, r.complementarity});
  };
  const auto consider = [&](const DualState& d) {
    AllocationSolution probe = best;
    probe.dual = project(d, theta);
    probe.kkt = kkt_report(sc, traj, gains, theta, probe);
    if (worst(probe.kkt) < worst(best.kkt)) {
      best.dual = probe.dual;
      best.kkt = probe.kkt;
    }
  };
  if (polish_dual) consider(*polish_dual);
  if (ub_dual) consider(*ub_dual);
  // Snap: re-run the plain recovery at the reported dual's exact
  // water-filling densities. The stationarity check measures the reported
  // densities against that very water-filling, so the snapped vertex
  // certifies far more tightly than the pool's merged mixture; accept it
  // only when it gives up at most round-off in value.
  const auto consider_snap = [&](const DualState& d0) {
    const DualState d = project(d0, theta);
    auto rec = lp_recover(sc, theta, gains, density_matrix(d, gains, density_cap));
    if (!rec) return;
    ++lp_solves;
    const double eta = trajectory_eta(gains, rec->allocation, theta);
    if (eta + 1e-9 * std::max(1.0, std::abs(best.eta)) < best.eta) return;
    if (config.incumbent && eta < inc_eta) return;
    AllocationSolution probe = best;
    probe.eta = eta;
    probe.allocation = rec->allocation;
    probe.dual = d;
    probe.kkt = kkt_report(sc, traj, gains, theta, probe);
    AllocationSolution alt = probe;
    alt.dual = project(rec->dual, theta);
    alt.kkt = kkt_report(sc, traj, gains, theta, alt);
    if (worst(alt.kkt) < worst(probe.kkt)) probe = alt;
    if (worst(probe.kkt) < worst(best.kkt)) {
      best.eta = probe.eta;
      best.allocation = probe.allocation;
      best.dual = probe.dual;
      best.kkt = probe.kkt;
    }
  };
  if (deep && polish_dual) consider_snap(*polish_dual);
  if (deep && ub_dual) consider_snap(*ub_dual);
  // Newton refinement of the final point: accepted only when it stays
  // feasible, gives up at most round-off in value, and certifies better.
  if (auto refined = deep ? newton_polish(sc, theta, gains, best)
                          : std::optional<AllocationSolution>{}) {
    AllocationSolution probe = *refined;
    probe.dual = project(probe.dual, theta);
    probe.kkt = kkt_report(sc, traj, gains, theta, probe);
    if (probe.kkt.primal <= 1e-9 &&
        probe.eta + 1e-9 * std::max(1.0, std::abs(best.eta)) >= best.eta &&
        (!config.incumbent || probe.eta >= inc_eta) &&
        worst(probe.kkt) < worst(best.kkt)) {
      best.eta = probe.eta;
      best.allocation = probe.allocation;
      best.dual = probe.dual;
      best.kkt = probe.kkt;
    }
  }
  best.dual_bound = std::max(best.dual_bound, best.eta);
  best.lp_solves = lp_solves;
  return best;
}

double achieved_eta(const Scenario& sc, const Trajectory& traj,
                    const Allocation& alloc, const Eigen::VectorXd& theta) {
  return trajectory_eta(gain_matrix(sc, traj), alloc, theta);
}

Scenario with_mrrs(const Scenario& sc, const Eigen::VectorXd& theta) {
  Scenario out = sc;
  for (int k = 0; k < out.user_count(); ++k) out.users[k].mrr = theta[k];
  return out;
}

}  // namespace uavmm
