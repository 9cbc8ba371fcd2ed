#pragma once

#include <cmath>

#include "riskscp/ocp.hpp"
#include "riskscp/sampling.hpp"

namespace riskscp::testing {

// dx = (A x + B u) dt, no noise, cost u^T R u (+ optional x^T Q x).
inline ProblemDefinition linear_problem(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                        double horizon, int nodes, double control_limit = 1e3) {
  ProblemDefinition p;
  p.name = "linear";
  p.state_dim = static_cast<int>(A.rows());
  p.control_dim = static_cast<int>(B.cols());
  p.horizon = horizon;
  p.nodes = nodes;
  p.control_lower = Eigen::VectorXd::Constant(p.control_dim, -control_limit);
  p.control_upper = Eigen::VectorXd::Constant(p.control_dim, control_limit);
  p.drift = [A, B](const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
    return DriftEval{A * x + B * u, A, B};
  };
  const int n = p.state_dim;
  p.diffusion = [n](const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return DiffusionEval{Eigen::MatrixXd::Zero(n, n), {}, {}};
  };
  const int m = p.control_dim;
  p.running_cost = [n, m](const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    StageCostEval c;
    c.value = u.squaredNorm();
    c.gx = Eigen::VectorXd::Zero(n);
    c.gu = 2.0 * u;
    c.huu = 2.0 * Eigen::MatrixXd::Identity(m, m);
    return c;
  };
  return p;
}

// Two-state nonlinear system with state- and control-dependent diffusion,
// one nonlinear constraint and a scalar terminal equality.
inline ProblemDefinition pendulum_problem(int nodes, int substeps = 1) {
  ProblemDefinition p;
  p.name = "pendulum";
  p.state_dim = 2;
  p.control_dim = 1;
  p.param_dim = 1;
  p.horizon = 2.0;
  p.nodes = nodes;
  p.substeps = substeps;
  p.control_lower = Eigen::VectorXd::Constant(1, -5.0);
  p.control_upper = Eigen::VectorXd::Constant(1, 5.0);
  p.drift = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& xi) {
    DriftEval b;
    b.value = Eigen::Vector2d(x(1), -xi(0) * std::sin(x(0)) + u(0) - 0.1 * x(1) * std::abs(x(1)));
    b.dx.resize(2, 2);
    b.dx << 0, 1, -xi(0) * std::cos(x(0)), -0.2 * std::abs(x(1));
    b.du = Eigen::Vector2d(0, 1);
    return b;
  };
  p.diffusion = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
    DiffusionEval s;
    s.value.resize(2, 2);
    s.value << 0.05 * u(0), 0, 0, 0.1 + 0.05 * x(0) * x(0);
    s.dx = {Eigen::MatrixXd(), Eigen::MatrixXd::Zero(2, 2)};
    s.dx[1](1, 0) = 0.1 * x(0);
    s.du = {Eigen::Vector2d(0.05, 0), Eigen::MatrixXd()};
    return s;
  };
  p.running_cost = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    StageCostEval c;
    c.value = x(0) * x(0) + u(0) * u(0);
    c.gx = Eigen::Vector2d(2 * x(0), 0);
    c.gu = Eigen::VectorXd::Constant(1, 2 * u(0));
    c.hxx = Eigen::Vector2d(2, 0).asDiagonal();
    c.huu = Eigen::MatrixXd::Constant(1, 1, 2);
    return c;
  };
  p.terminal_cost = [](const Eigen::VectorXd& x) {
    TerminalCostEval c;
    c.value = (x(0) - 1) * (x(0) - 1);
    c.gx = Eigen::Vector2d(2 * (x(0) - 1), 0);
    c.hxx = Eigen::Vector2d(2, 0).asDiagonal();
    return c;
  };
  p.constraint_count = 1;
  p.constraints = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    ConstraintEval g;
    g.value = Eigen::VectorXd::Constant(1, x(0) * x(0) + x(1) - 2.0);
    g.dx = Eigen::RowVector2d(2 * x(0), 1);
    return g;
  };
  p.equality_count = 1;
  p.terminal_equality = [](const Eigen::VectorXd& x) {
    ConstraintEval h;
    h.value = Eigen::VectorXd::Constant(1, x(1));
    h.dx = Eigen::RowVector2d(0, 1);
    return h;
  };
  return p;
}

inline ScenarioSet pendulum_scenarios(const ProblemDefinition& p, int count, std::uint64_t seed) {
  ScenarioDistribution dist{
      VectorDistribution::uniform(Eigen::Vector2d(0.1, -0.2), Eigen::Vector2d(0.4, 0.2)),
      VectorDistribution::uniform(Eigen::VectorXd::Constant(1, 0.8), Eigen::VectorXd::Constant(1, 1.2))};
  return sample_scenarios({seed, 0}, count, p.nodes * p.substeps, {2, 1}, p.dt() / p.substeps, dist);
}

// Central differences of f : R^d -> R^r.
template <typename F>
Eigen::MatrixXd finite_difference_jacobian(F&& f, const Eigen::VectorXd& at, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(at);
  Eigen::MatrixXd J(f0.size(), at.size());
  for (Eigen::Index c = 0; c < at.size(); ++c) {
    Eigen::VectorXd plus = at, minus = at;
    plus(c) += h;
    minus(c) -= h;
    J.col(c) = (f(plus) - f(minus)) / (2 * h);
  }
  return J;
}

}  // namespace riskscp::testing
