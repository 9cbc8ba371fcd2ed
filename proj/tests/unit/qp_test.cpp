#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "riskscp/errors.hpp"
#include "riskscp/qp.hpp"

namespace riskscp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

QuadraticProgram make_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& A,
                         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  QuadraticProgram qp;
  qp.P = P;
  qp.q = q;
  qp.A = A.sparseView();
  qp.lower = lower;
  qp.upper = upper;
  qp.var_lower = Eigen::VectorXd::Constant(q.size(), -kInf);
  qp.var_upper = Eigen::VectorXd::Constant(q.size(), kInf);
  return qp;
}

// Enumerates every active set of C x <= d and keeps the best KKT point.
double active_set_oracle(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& C,
                         const Eigen::VectorXd& d, Eigen::VectorXd& best_x) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(d.size());
  double best = kInf;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> active;
    for (int r = 0; r < m; ++r)
      if (mask & (1 << r)) active.push_back(r);
    const int a = static_cast<int>(active.size());
    if (a > n) continue;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + a, n + a);
    Eigen::VectorXd rhs(n + a);
    K.topLeftCorner(n, n) = P;
    rhs.head(n) = -q;
    for (int r = 0; r < a; ++r) {
      K.block(n + r, 0, 1, n) = C.row(active[r]);
      K.block(0, n + r, n, 1) = C.row(active[r]).transpose();
      rhs(n + r) = d(active[r]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    if ((sol.tail(a).array() < -1e-10).any()) continue;
    if (((C * x - d).array() > 1e-10).any()) continue;
    const double obj = 0.5 * x.dot(P * x) + q.dot(x);
    if (obj < best) {
      best = obj;
      best_x = x;
    }
  }
  return best;
}

TEST(SolveQp, ActiveUpperBound) {
  // min (x - 1)^2 s.t. x <= 0.
  auto qp = make_qp(Eigen::MatrixXd::Constant(1, 1, 2), Eigen::VectorXd::Constant(1, -2),
                    Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, -kInf), Eigen::VectorXd::Zero(1));
  const auto sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  EXPECT_NEAR(sol.x(0), 0.0, 1e-7);
  EXPECT_NEAR(sol.row_duals(0), 2.0, 1e-6);
}

TEST(SolveQp, EqualityBySymmetry) {
  auto qp = make_qp(2 * Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Ones(1, 3),
                    Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1));
  const auto sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  EXPECT_LT((sol.x - Eigen::Vector3d::Constant(1.0 / 3)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(sol.row_duals(0), -2.0 / 3, 1e-8);
}

TEST(SolveQp, RandomStrictlyConvexMatchOracle) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 10, m = 5;
    Eigen::MatrixXd L(n, n), C(m, n);
    Eigen::VectorXd q(n), d(m);
    for (int a = 0; a < n; ++a) {
      q(a) = g(rng);
      for (int b = 0; b < n; ++b) L(a, b) = g(rng);
    }
    for (int r = 0; r < m; ++r) {
      d(r) = g(rng);
      for (int c = 0; c < n; ++c) C(r, c) = g(rng);
    }
    const Eigen::MatrixXd P = L * L.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    auto qp = make_qp(P, q, C, Eigen::VectorXd::Constant(m, -kInf), d);
    const double tol = 1e-8;
    const auto sol = solve_qp(qp, {tol, 100});
    ASSERT_EQ(sol.status, QpStatus::kOptimal) << trial;
    Eigen::VectorXd oracle_x;
    const double oracle = active_set_oracle(P, q, C, d, oracle_x);
    EXPECT_NEAR(sol.objective, oracle, 1e-6 * std::max(1.0, std::abs(oracle))) << trial;
    EXPECT_LE(sol.primal_residual, tol);
    EXPECT_LE(sol.dual_residual, 1e-6);
    EXPECT_TRUE((sol.row_duals.array() >= -1e-8).all());
  }
}

TEST(SolveQp, BoundsIntervalsAndFixedVariables) {
  // min ||x - c||^2, x0 fixed, 0 <= x1 <= 0.5, -1 <= x1 + x2 <= 1.
  Eigen::MatrixXd P = 2 * Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd c(3);
  c << 5, 1, 3;
  auto qp = make_qp(P, -2 * c, (Eigen::MatrixXd(1, 3) << 0, 1, 1).finished(),
                    Eigen::VectorXd::Constant(1, -1), Eigen::VectorXd::Constant(1, 1));
  qp.var_lower << 0.25, 0, -kInf;
  qp.var_upper << 0.25, 0.5, kInf;
  const auto sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  // x1 + x2 = 1 active; on that line the minimizer has x1 = -0.5, clipped to the bound 0.
  EXPECT_NEAR(sol.x(0), 0.25, 1e-12);
  EXPECT_NEAR(sol.x(1), 0.0, 1e-7);
  EXPECT_NEAR(sol.x(2), 1.0, 1e-7);
  EXPECT_LE(sol.dual_residual, 1e-6);
  EXPECT_NEAR(sol.bound_duals(0), -2 * (0.25 - 5), 1e-6);
  EXPECT_LT(sol.bound_duals(1), 0.0);  // lower bound active
  EXPECT_GT(sol.row_duals(0), 0.0);    // upper side active
}

TEST(SolveQp, DegenerateLinearPart) {
  // Free variable with no curvature but bounded through rows: min t s.t. t >= |x - 1|, x fixed-ish.
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2, 2);
  P(0, 0) = 1.0;
  Eigen::VectorXd q(2);
  q << 0, 1;
  Eigen::MatrixXd A(2, 2);
  A << 1, -1, -1, -1;
  auto qp = make_qp(P, q, A, Eigen::VectorXd::Constant(2, -kInf), Eigen::Vector2d(1, -1));
  const auto sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  // Minimizes x^2/2 + |x - 1|: optimum at x = 1, t = 0.
  // At a kink the iterate is only sqrt(tol)-accurate; the objective is tol-accurate.
  EXPECT_NEAR(sol.objective, 0.5, 1e-7);
  EXPECT_NEAR(sol.x(0), 1.0, 1e-3);
}

TEST(SolveQp, InfeasibleIsAStatus) {
  auto qp = make_qp(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
                    (Eigen::MatrixXd(2, 2) << 1, 0, -1, 0).finished(), Eigen::VectorXd::Constant(2, -kInf),
                    Eigen::Vector2d(-1, -1));
  const auto sol = solve_qp(qp);
  EXPECT_NE(sol.status, QpStatus::kOptimal);
  auto crossed = make_qp(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1),
                         Eigen::VectorXd::Constant(1, 2), Eigen::VectorXd::Constant(1, 1));
  EXPECT_EQ(solve_qp(crossed).status, QpStatus::kInfeasible);
}

TEST(SolveQp, RejectsInconsistentDimensions) {
  auto qp = make_qp(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Ones(1, 2),
                    Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  qp.var_lower.resize(1);
  EXPECT_THROW(solve_qp(qp), UsageError);
}

TEST(SolveQp, StatusNames) {
  EXPECT_EQ(to_string(QpStatus::kOptimal), "optimal");
  EXPECT_EQ(to_string(QpStatus::kInfeasible), "infeasible");
}

}  // namespace
}  // namespace riskscp
