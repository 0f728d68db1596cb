#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "uavmm/ellipsoid.hpp"
#include "uavmm/lp.hpp"
#include "uavmm/qcqp.hpp"

using namespace uavmm;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Ellipsoid

TEST_CASE("1-D ellipsoid step bisects the interval") {
  Ellipsoid e = Ellipsoid::ball(Eigen::VectorXd::Zero(1), 1.0);
  Eigen::VectorXd cut(1);
  cut << 1.0;
  Ellipsoid r = ellipsoid_step(e, cut);
  CHECK(r.center[0] == doctest::Approx(-0.5));
  CHECK(r.shape(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("2-D central cut lands at the textbook center") {
  Ellipsoid e = Ellipsoid::ball(Eigen::VectorXd::Zero(2), 1.0);
  Eigen::VectorXd cut(2);
  cut << 1.0, 0.0;
  Ellipsoid r = ellipsoid_step(e, cut);
  CHECK(r.center[0] == doctest::Approx(-1.0 / 3.0));
  CHECK(r.center[1] == doctest::Approx(0.0));
}

TEST_CASE("ellipsoid volume shrinks by the classical factor") {
  std::mt19937 rng(11);
  std::normal_distribution<double> gauss;
  for (int m : {2, 5, 17}) {
    Eigen::VectorXd c(m);
    for (int i = 0; i < m; ++i) c[i] = gauss(rng);
    Ellipsoid e = Ellipsoid::ball(c, 10.0);
    double logdet = e.log_det();
    for (int step = 0; step < 40; ++step) {
      Eigen::VectorXd cut(m);
      for (int i = 0; i < m; ++i) cut[i] = gauss(rng);
      if (cut.norm() < 1e-12) continue;
      e = ellipsoid_step(e, cut);
      const double next = e.log_det();
      // log-volume drop >= 1/(m+1) means volume ratio <= exp(-1/(2(m+1))).
      CHECK(next <= logdet - 1.0 / (m + 1.0) + 1e-9);
      logdet = next;
    }
  }
}

TEST_CASE("ellipsoid rejects degenerate input") {
  Ellipsoid e = Ellipsoid::ball(Eigen::VectorXd::Zero(3), 1.0);
  CHECK_THROWS_AS(ellipsoid_step(e, Eigen::VectorXd::Zero(3)), NumericsError);
  e.shape.setZero();
  Eigen::VectorXd cut(3);
  cut << 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(ellipsoid_step(e, cut), NumericsError);
}

// ---------------------------------------------------------------------------
// LP

namespace {

LinearProgram make_lp(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                      const Eigen::VectorXd& c, double lo, double hi) {
  LinearProgram lp;
  lp.objective = c;
  lp.constraints = a;
  lp.rhs = b;
  lp.lower = Eigen::VectorXd::Constant(c.size(), lo);
  lp.upper = Eigen::VectorXd::Constant(c.size(), hi);
  return lp;
}

// Independent oracle: textbook dense tableau simplex for
//   max c'x  s.t.  A x <= b (b >= 0), 0 <= x <= 1  (box folded into rows).
double oracle_simplex(const Eigen::MatrixXd& a0, const Eigen::VectorXd& b0,
                      const Eigen::VectorXd& c) {
  const int n = static_cast<int>(c.size());
  const int m0 = static_cast<int>(b0.size());
  const int m = m0 + n;  // add x_j <= 1 rows
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  t.block(0, 0, m0, n) = a0;
  t.block(m0, 0, n, n) = Eigen::MatrixXd::Identity(n, n);
  t.block(0, n, m, m) = Eigen::MatrixXd::Identity(m, m);
  t.block(0, n + m, m0, 1) = b0;
  t.block(m0, n + m, n, 1) = Eigen::VectorXd::Ones(n);
  t.block(m, 0, 1, n) = -c.transpose();
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;
  for (int iter = 0; iter < 20000; ++iter) {
    int piv_col = -1;
    double best = -1e-9;
    for (int j = 0; j < n + m; ++j)
      if (t(m, j) < best) {
        best = t(m, j);
        piv_col = j;
      }
    if (piv_col < 0) break;
    int piv_row = -1;
    double best_ratio = kInf;
    for (int i = 0; i < m; ++i) {
      if (t(i, piv_col) > 1e-9) {
        const double ratio = t(i, n + m) / t(i, piv_col);
        if (ratio < best_ratio - 1e-12) {
          best_ratio = ratio;
          piv_row = i;
        }
      }
    }
    REQUIRE(piv_row >= 0);  // boxed problem cannot be unbounded
    t.row(piv_row) /= t(piv_row, piv_col);
    for (int i = 0; i <= m; ++i)
      if (i != piv_row) t.row(i) -= t(i, piv_col) * t.row(piv_row);
    basis[piv_row] = piv_col;
  }
  return t(m, n + m);
}

}  // namespace

TEST_CASE("lp basics") {
  // max x s.t. x <= 1, x >= 0
  Eigen::MatrixXd a(1, 1);
  a << 1.0;
  Eigen::VectorXd b(1), c(1);
  b << 1.0;
  c << 1.0;
  auto sol = solve_lp(make_lp(a, b, c, 0.0, kInf));
  CHECK(sol.status == LpStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(1.0));

  // degenerate optimum face: max x+y s.t. x+y <= 1
  Eigen::MatrixXd a2(1, 2);
  a2 << 1.0, 1.0;
  Eigen::VectorXd b2(1), c2(2);
  b2 << 1.0;
  c2 << 1.0, 1.0;
  auto sol2 = solve_lp(make_lp(a2, b2, c2, 0.0, kInf));
  CHECK(sol2.status == LpStatus::Optimal);
  CHECK(sol2.value == doctest::Approx(1.0));
}

TEST_CASE("lp detects infeasible and unbounded problems") {
  Eigen::MatrixXd a(1, 1);
  a << 1.0;
  Eigen::VectorXd b(1), c(1);
  b << -1.0;  // x <= -1 with x >= 0
  c << 1.0;
  CHECK(solve_lp(make_lp(a, b, c, 0.0, kInf)).status == LpStatus::Infeasible);

  Eigen::MatrixXd a2(1, 1);
  a2 << -1.0;  // -x <= 0, maximize x, no upper bound
  Eigen::VectorXd b2(1);
  b2 << 0.0;
  CHECK(solve_lp(make_lp(a2, b2, c, 0.0, kInf)).status == LpStatus::Unbounded);
}

TEST_CASE("lp handles free variables and negative rhs") {
  // max y s.t. y - x <= 0, x <= 3, y free, 0 <= x.
  Eigen::MatrixXd a(2, 2);
  a << -1.0, 1.0, 1.0, 0.0;
  Eigen::VectorXd b(2), c(2);
  b << 0.0, 3.0;
  c << 0.0, 1.0;
  LinearProgram lp = make_lp(a, b, c, 0.0, kInf);
  lp.lower[1] = -kInf;
  auto sol = solve_lp(lp);
  CHECK(sol.status == LpStatus::Optimal);
  CHECK(sol.value == doctest::Approx(3.0));

  // phase-I required: x >= 2 encoded as -x <= -2.
  Eigen::MatrixXd a2(2, 1);
  a2 << -1.0, 1.0;
  Eigen::VectorXd b2(2), c2(1);
  b2 << -2.0, 5.0;
  c2 << -1.0;  // minimize x
  auto sol2 = solve_lp(make_lp(a2, b2, c2, 0.0, kInf));
  CHECK(sol2.status == LpStatus::Optimal);
  CHECK(sol2.x[0] == doctest::Approx(2.0));
}

TEST_CASE("random LPs match an independent simplex oracle") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 20, n = 40;
    Eigen::MatrixXd a(m, n);
    Eigen::VectorXd b(m), c(n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = uni(rng);
      b[i] = 0.5 + std::abs(uni(rng));  // keep the origin feasible
    }
    for (int j = 0; j < n; ++j) c[j] = uni(rng);
    auto sol = solve_lp(make_lp(a, b, c, 0.0, 1.0));
    REQUIRE(sol.status == LpStatus::Optimal);
    const double ref = oracle_simplex(a, b, c);
    CHECK(sol.value == doctest::Approx(ref).epsilon(1e-7));
    // primal feasibility of the returned vertex
    CHECK(((a * sol.x - b).array() <= 1e-8).all());
    CHECK((sol.x.array() >= -1e-10).all());
    CHECK((sol.x.array() <= 1.0 + 1e-10).all());
    // weak duality: b'y + sum of bound prices >= c'x, with y >= 0
    CHECK((sol.row_duals.array() >= -1e-8).all());
  }
}

// ---------------------------------------------------------------------------
// QCQP

namespace {

Eigen::SparseMatrix<double> dense_to_sparse(const Eigen::MatrixXd& m) {
  return m.sparseView(1e-300);
}

// Penalty + gradient-descent oracle, independent of the barrier solver.
double oracle_qcqp(const ConvexQcqp& q, Eigen::VectorXd x) {
  double rho = 10.0;
  for (int stage = 0; stage < 8; ++stage) {
    for (int iter = 0; iter < 20000; ++iter) {
      Eigen::VectorXd grad = q.objective;
      for (const auto& g : q.constraints) {
        double f = g.linear.dot(x) + g.constant;
        Eigen::VectorXd gf = g.linear;
        if (g.quadratic.rows() > 0) {
          const Eigen::VectorXd qx = g.quadratic * x;
          f += 0.5 * x.dot(qx);
          gf += qx;
        }
        if (f > 0.0) grad += 2.0 * rho * f * gf;
      }
      if (grad.norm() < 1e-9) break;
      // backtracking on the penalty objective
      auto value = [&](const Eigen::VectorXd& p) {
        double v = q.objective.dot(p);
        for (const auto& g : q.constraints) {
          double f = g.linear.dot(p) + g.constant;
          if (g.quadratic.rows() > 0) f += 0.5 * p.dot(g.quadratic * p);
          if (f > 0.0) v += rho * f * f;
        }
        return v;
      };
      const double v0 = value(x);
      double step = 1.0;
      while (step > 1e-16 && value(x - step * grad) > v0 - 0.5 * step * grad.squaredNorm())
        step *= 0.5;
      if (step <= 1e-16) break;
      x -= step * grad;
    }
    rho *= 10.0;
  }
  return q.objective.dot(x);
}

}  // namespace

TEST_CASE("qcqp with only linear constraints reduces to an LP") {
  // minimize -t s.t. t <= 3
  ConvexQcqp q;
  q.objective = Eigen::VectorXd::Constant(1, -1.0);
  QuadraticConstraint g;
  g.linear = Eigen::VectorXd::Constant(1, 1.0);
  g.constant = -3.0;
  q.constraints = {g};
  // bound the feasible set from below so the barrier has a bounded domain
  QuadraticConstraint lo;
  lo.linear = Eigen::VectorXd::Constant(1, -1.0);
  lo.constant = -100.0;
  q.constraints.push_back(lo);
  auto sol = solve_qcqp(q, Eigen::VectorXd::Zero(1));
  CHECK(sol.status == QcqpStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("qcqp quadratic peak") {
  // maximize eta s.t. eta <= 1 - ||x - c||^2; optimum eta = 1, x = c.
  const Eigen::Vector2d c(0.7, -0.3);
  ConvexQcqp q;
  q.objective = Eigen::VectorXd::Zero(3);
  q.objective[0] = -1.0;  // minimize -eta, vars = (eta, x)
  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(3, 3);
  quad(1, 1) = quad(2, 2) = 2.0;
  QuadraticConstraint g;
  g.quadratic = dense_to_sparse(quad);
  g.linear = Eigen::VectorXd::Zero(3);
  g.linear[0] = 1.0;
  g.linear[1] = -2.0 * c[0];
  g.linear[2] = -2.0 * c[1];
  g.constant = c.squaredNorm() - 1.0;
  q.constraints = {g};
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3);
  x0[0] = -5.0;
  auto sol = solve_qcqp(q, x0);
  CHECK(sol.status == QcqpStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.x[1] == doctest::Approx(c[0]).epsilon(1e-4));
  CHECK(sol.x[2] == doctest::Approx(c[1]).epsilon(1e-4));
  CHECK(sol.kkt_stationarity < 1e-6);
  CHECK(sol.kkt_feasibility <= 0.0 + 1e-12);
}

TEST_CASE("qcqp equality constraints via null-space") {
  // minimize x+y s.t. ||(x,y)||^2 <= 4, x - y = 1.
  ConvexQcqp q;
  q.objective = Eigen::VectorXd::Ones(2);
  QuadraticConstraint ball;
  ball.quadratic = dense_to_sparse(2.0 * Eigen::MatrixXd::Identity(2, 2));
  ball.linear = Eigen::VectorXd::Zero(2);
  ball.constant = -4.0;
  q.constraints = {ball};
  q.eq_lhs = Eigen::MatrixXd(1, 2);
  q.eq_lhs << 1.0, -1.0;
  q.eq_rhs = Eigen::VectorXd::Constant(1, 1.0);
  auto sol = solve_qcqp(q, Eigen::VectorXd::Zero(2));
  CHECK(sol.status == QcqpStatus::Optimal);
  CHECK(sol.x[0] - sol.x[1] == doctest::Approx(1.0).epsilon(1e-9));
  // x = y + 1 on the chord, minimize 2y + 1 over 2y^2 + 2y - 3 <= 0.
  const double expected = -std::sqrt(7.0);
  CHECK(sol.value == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("qcqp reports infeasibility") {
  // ||x||^2 <= 1 and ||x - (5,0)||^2 <= 1 cannot both hold.
  ConvexQcqp q;
  q.objective = Eigen::VectorXd::Ones(2);
  QuadraticConstraint b1, b2;
  b1.quadratic = dense_to_sparse(2.0 * Eigen::MatrixXd::Identity(2, 2));
  b1.linear = Eigen::VectorXd::Zero(2);
  b1.constant = -1.0;
  b2.quadratic = b1.quadratic;
  b2.linear = Eigen::VectorXd::Zero(2);
  b2.linear[0] = -10.0;
  b2.constant = 25.0 - 1.0;
  q.constraints = {b1, b2};
  auto sol = solve_qcqp(q, Eigen::VectorXd::Zero(2));
  CHECK(sol.status == QcqpStatus::Infeasible);
}

TEST_CASE("qcqp rejects indefinite quadratic terms") {
  ConvexQcqp q;
  q.objective = Eigen::VectorXd::Ones(2);
  Eigen::MatrixXd ind(2, 2);
  ind << 1.0, 0.0, 0.0, -1.0;
  QuadraticConstraint g;
  g.quadratic = dense_to_sparse(ind);
  g.linear = Eigen::VectorXd::Zero(2);
  g.constant = -1.0;
  q.constraints = {g};
  CHECK_THROWS_AS(solve_qcqp(q, Eigen::VectorXd::Zero(2)), NumericsError);
}

TEST_CASE("random PSD instances match the projected-gradient oracle") {
  std::mt19937 rng(31);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 8);
    ConvexQcqp q;
    q.objective.resize(n);
    for (int i = 0; i < n; ++i) q.objective[i] = gauss(rng);
    // bounding ball centered at a random point, then a few random PSD cuts
    Eigen::VectorXd center(n);
    for (int i = 0; i < n; ++i) center[i] = 0.3 * gauss(rng);
    QuadraticConstraint ball;
    ball.quadratic = dense_to_sparse(2.0 * Eigen::MatrixXd::Identity(n, n));
    ball.linear = -2.0 * center;
    ball.constant = center.squaredNorm() - 4.0;
    q.constraints = {ball};
    const int extra = 1 + static_cast<int>(rng() % 3);
    for (int e = 0; e < extra; ++e) {
      Eigen::MatrixXd m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = gauss(rng);
      Eigen::MatrixXd psd = m * m.transpose() / n;
      Eigen::VectorXd a(n);
      for (int i = 0; i < n; ++i) a[i] = 0.3 * gauss(rng);
      QuadraticConstraint g;
      g.quadratic = dense_to_sparse(psd);
      g.linear = -psd * a;
      // slack at the ball center keeps Slater's condition alive
      const double at_center =
          0.5 * (center - a).dot(psd * (center - a));
      g.constant = 0.5 * a.dot(psd * a) - at_center - 1.0;
      q.constraints.push_back(g);
    }
    auto sol = solve_qcqp(q, center);
    REQUIRE(sol.status == QcqpStatus::Optimal);
    const double ref = oracle_qcqp(q, center);
    CHECK(sol.value == doctest::Approx(ref).epsilon(1e-5));
    CHECK(sol.kkt_feasibility <= 1e-9);
    // never worse than the feasible start
    CHECK(sol.value <= q.objective.dot(center) + 1e-9);
  }
}
