#include "uavmm/lp.hpp"

#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <vector>

#include "uavmm/ellipsoid.hpp"  // NumericsError

namespace uavmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;

// Variable layout: [structural 0..n-1 | slacks n..n+M-1 | artificials ...].
class Simplex {
 public:
  explicit Simplex(const LinearProgram& lp)
      : n_(lp.num_vars()), m_(lp.num_rows()), lp_(lp) {
    lower_.resize(n_ + m_);
    upper_.resize(n_ + m_);
    for (int j = 0; j < n_; ++j) {
      lower_[j] = lp.lower[j];
      upper_[j] = lp.upper[j];
    }
    for (int i = 0; i < m_; ++i) {
      lower_[n_ + i] = 0.0;
      upper_[n_ + i] = kInf;
    }
    value_.assign(n_ + m_, 0.0);
    in_basis_.assign(n_ + m_, false);
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(lower_[j]))
        value_[j] = lower_[j];
      else if (std::isfinite(upper_[j]))
        value_[j] = upper_[j];
      else
        value_[j] = 0.0;  // free variable rests at 0
    }
    // Slack basis; rows with negative slack get an artificial.
    Eigen::VectorXd xs(n_);
    for (int j = 0; j < n_; ++j) xs[j] = value_[j];
    Eigen::VectorXd s = lp.rhs - lp.constraints * xs;
    basis_.resize(m_);
    binv_ = Eigen::MatrixXd::Identity(m_, m_);
    for (int i = 0; i < m_; ++i) {
      if (s[i] >= 0.0) {
        basis_[i] = n_ + i;
        value_[n_ + i] = s[i];
        in_basis_[n_ + i] = true;
      } else {
        // artificial column is -e_i, value -s[i] > 0
        const int a = static_cast<int>(lower_.size());
        lower_.conservativeResize(a + 1);
        upper_.conservativeResize(a + 1);
        lower_[a] = 0.0;
        upper_[a] = kInf;
        value_.push_back(-s[i]);
        in_basis_.push_back(true);
        artificial_row_.push_back(i);
        basis_[i] = a;
        has_artificials_ = true;
      }
    }
    num_total_ = static_cast<int>(lower_.size());
    // Artificial columns are -e_i, so the identity is not the basis inverse.
    if (has_artificials_) refactorize();
  }

  bool has_artificials() const { return has_artificials_; }
  int iterations() const { return iterations_; }

  // Returns Optimal / Unbounded / IterationLimit for the given objective
  // over currently-allowed variables.
  LpStatus run(const Eigen::VectorXd& cost, int max_iter) {
    cost_ = cost;
    int degenerate_streak = 0;
    bool bland = false;
    while (iterations_ < max_iter) {
      Eigen::VectorXd y = dual_vector();
      int entering = -1;
      int direction = 0;  // +1 increase, -1 decrease
      double best = kCostTol * (1.0 + cost_.cwiseAbs().maxCoeff());
      for (int j = 0; j < num_total_; ++j) {
        if (in_basis_[j] || blocked(j)) continue;
        const double d = cost_[j] - y.dot(column(j));
        const bool at_lower = std::isfinite(lower_[j]) && value_[j] <= lower_[j];
        const bool at_upper = std::isfinite(upper_[j]) && value_[j] >= upper_[j];
        const bool is_free = !at_lower && !at_upper;
        int dir = 0;
        double viol = 0.0;
        if ((at_lower || is_free) && d > best) {
          dir = +1;
          viol = d;
        }
        if ((at_upper || is_free) && -d > best && -d > viol) {
          dir = -1;
          viol = -d;
        }
        if (dir != 0) {
          if (bland) {
            entering = j;
            direction = dir;
            break;
          }
          if (viol > best) {
            best = viol;
            entering = j;
            direction = dir;
          }
        }
      }
      if (entering < 0) return LpStatus::Optimal;

      const Eigen::VectorXd w = binv_ * column(entering);
      // Ratio test.
      double t_max = upper_[entering] - lower_[entering];  // bound flip span
      if (!std::isfinite(t_max)) t_max = kInf;
      int leaving = -1;
      double leave_to = 0.0;  // bound the leaving variable moves to
      for (int i = 0; i < m_; ++i) {
        const double delta = direction * w[i];
        const int b = basis_[i];
        double t;
        double target;
        if (delta > kPivotTol) {
          if (!std::isfinite(lower_[b])) continue;
          t = (value_[b] - lower_[b]) / delta;
          target = lower_[b];
        } else if (delta < -kPivotTol) {
          if (!std::isfinite(upper_[b])) continue;
          t = (upper_[b] - value_[b]) / (-delta);
          target = upper_[b];
        } else {
          continue;
        }
        t = std::max(t, 0.0);
        const bool better = t < t_max - 1e-12;
        const bool tie = leaving >= 0 && std::abs(t - t_max) <= 1e-12 && b < basis_[leaving];
        if (better || tie) {
          t_max = std::min(t_max, t);
          leaving = i;
          leave_to = target;
        }
      }
      if (!std::isfinite(t_max)) return LpStatus::Unbounded;

      if (t_max <= 1e-12) {
        ++degenerate_streak;
        if (degenerate_streak > 2 * (num_total_ + m_)) bland = true;
      } else {
        degenerate_streak = 0;
      }

      // Apply the step.
      const double step = direction * t_max;
      for (int i = 0; i < m_; ++i) value_[basis_[i]] -= w[i] * step;
      value_[entering] += step;
      ++iterations_;
      if (leaving < 0) continue;  // bound flip, basis unchanged

      const int out = basis_[leaving];
      value_[out] = leave_to;
      in_basis_[out] = false;
      in_basis_[entering] = true;
      basis_[leaving] = entering;
      // Rank-1 update of B^-1.
      const double piv = w[leaving];
      if (std::abs(piv) < kPivotTol) {
        refactorize();
      } else {
        Eigen::RowVectorXd row = binv_.row(leaving) / piv;
        for (int i = 0; i < m_; ++i) {
          if (i == leaving) continue;
          binv_.row(i) -= w[i] * row;
        }
        binv_.row(leaving) = row;
      }
      if (iterations_ % 64 == 0) refactorize();
    }
    return LpStatus::IterationLimit;
  }

  // Lock artificials at zero for phase II; pivot basic artificials out where
  // possible.
  void retire_artificials() {
    for (size_t a = 0; a < artificial_row_.size(); ++a) {
      const int var = n_ + m_ + static_cast<int>(a);
      upper_[var] = 0.0;
      if (!in_basis_[var]) {
        value_[var] = 0.0;
        continue;
      }
      int row = -1;
      for (int i = 0; i < m_; ++i)
        if (basis_[i] == var) row = i;
      if (row < 0) continue;
      for (int j = 0; j < n_ + m_; ++j) {
        if (in_basis_[j]) continue;
        const double w = binv_.row(row).dot(column(j));
        if (std::abs(w) > 1e-7) {
          in_basis_[var] = false;
          value_[var] = 0.0;
          in_basis_[j] = true;
          basis_[row] = j;
          refactorize();
          break;
        }
      }
      // If no pivot exists the row is redundant; the artificial stays basic
      // at zero with a zero-width bound.
    }
  }

  double phase1_infeasibility() const {
    double s = 0.0;
    for (size_t a = 0; a < artificial_row_.size(); ++a) s += value_[n_ + m_ + a];
    return s;
  }

  Eigen::VectorXd phase1_cost() const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(num_total_);
    for (size_t a = 0; a < artificial_row_.size(); ++a) c[n_ + m_ + a] = -1.0;
    return c;
  }

  Eigen::VectorXd phase2_cost() const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(num_total_);
    c.head(n_) = lp_.objective;
    return c;
  }

  void refine() {
    // Recompute basic values and B^-1 from the original data to clear
    // accumulated pivot drift.
    refactorize();
    Eigen::VectorXd rhs = lp_.rhs;
    for (int j = 0; j < num_total_; ++j)
      if (!in_basis_[j] && value_[j] != 0.0) rhs -= column(j) * value_[j];
    const Eigen::VectorXd xb = binv_ * rhs;
    for (int i = 0; i < m_; ++i) value_[basis_[i]] = xb[i];
  }

  Eigen::VectorXd solution() const {
    Eigen::VectorXd x(n_);
    for (int j = 0; j < n_; ++j) x[j] = value_[j];
    return x;
  }

  Eigen::VectorXd row_duals() const {
    // y = c_B' B^-1; with Ax <= b these are the nonnegative row prices.
    return dual_vector();
  }

  int num_artificials() const { return static_cast<int>(artificial_row_.size()); }

 private:
  bool blocked(int j) const {
    return std::isfinite(upper_[j]) && std::isfinite(lower_[j]) &&
           upper_[j] - lower_[j] <= 0.0 && !in_basis_[j];
  }

  Eigen::VectorXd column(int j) const {
    if (j < n_) return lp_.constraints.col(j);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
    if (j < n_ + m_) {
      e[j - n_] = 1.0;
    } else {
      e[artificial_row_[j - n_ - m_]] = -1.0;
    }
    return e;
  }

  Eigen::VectorXd dual_vector() const {
    Eigen::VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) cb[i] = cost_[basis_[i]];
    return binv_.transpose() * cb;
  }

  void refactorize() {
    Eigen::MatrixXd B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = column(basis_[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    binv_ = lu.inverse();
  }

  int n_;
  int m_;
  int num_total_ = 0;
  const LinearProgram& lp_;
  Eigen::VectorXd lower_, upper_;
  std::vector<double> value_;
  std::vector<bool> in_basis_;
  std::vector<int> basis_;
  std::vector<int> artificial_row_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd cost_;
  bool has_artificials_ = false;
  int iterations_ = 0;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
  if (lp.constraints.rows() != lp.num_rows() || lp.constraints.cols() != lp.num_vars() ||
      lp.lower.size() != lp.num_vars() || lp.upper.size() != lp.num_vars())
    throw NumericsError("solve_lp: inconsistent dimensions");

  LpSolution out;
  Simplex simplex(lp);
  const int max_iter = 50 * (lp.num_vars() + 2 * lp.num_rows()) + 200;

  if (simplex.has_artificials()) {
    const LpStatus st = simplex.run(simplex.phase1_cost(), max_iter);
    if (st == LpStatus::IterationLimit) {
      out.status = LpStatus::IterationLimit;
      out.iterations = simplex.iterations();
      return out;
    }
    if (simplex.phase1_infeasibility() > 1e-7 * (1.0 + lp.rhs.cwiseAbs().maxCoeff())) {
      out.status = LpStatus::Infeasible;
      out.iterations = simplex.iterations();
      return out;
    }
    simplex.retire_artificials();
  }

  out.status = simplex.run(simplex.phase2_cost(), max_iter);
  simplex.refine();
  out.x = simplex.solution();
  out.value = lp.objective.dot(out.x);
  out.row_duals = simplex.row_duals();
  out.iterations = simplex.iterations();
  return out;
}

}  // namespace uavmm
