#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "riskscp/errors.hpp"
#include "riskscp/ocp.hpp"
#include "support/toy_problems.hpp"

namespace riskscp {
namespace {

using testing::finite_difference_jacobian;
using testing::linear_problem;
using testing::pendulum_problem;
using testing::pendulum_scenarios;

ScenarioSet fixed_scenarios(const ProblemDefinition& p, const Eigen::VectorXd& x0, int count = 3) {
  ScenarioDistribution dist{VectorDistribution::fixed(x0),
                            VectorDistribution::fixed(Eigen::VectorXd::Zero(p.param_dim))};
  return sample_scenarios({1, 0}, count, p.nodes * p.substeps, {p.state_dim, p.param_dim},
                          p.dt() / p.substeps, dist);
}

ControlTrajectory random_controls(const ProblemDefinition& p, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  ControlTrajectory c = ControlTrajectory::zeros(p);
  for (Eigen::Index s = 0; s < c.controls.rows(); ++s)
    for (Eigen::Index j = 0; j < c.controls.cols(); ++j) c.controls(s, j) = u(rng);
  return c;
}

TEST(Rollout, FrozenDynamics) {
  auto p = linear_problem(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 1), 1.0, 5);
  const auto set = fixed_scenarios(p, Eigen::Vector2d(0.3, -1));
  const auto r = rollout(p, ControlTrajectory::zeros(p), set);
  for (int i = 0; i < set.count; ++i)
    for (int k = 0; k <= 5; ++k) EXPECT_EQ(r.states[i].row(k), Eigen::RowVector2d(0.3, -1));
}

TEST(Rollout, ConstantDriftIsExact) {
  auto p = linear_problem(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Identity(1, 1), 1.0, 8);
  const auto set = fixed_scenarios(p, Eigen::VectorXd::Constant(1, 2.0));
  ControlTrajectory c = ControlTrajectory::zeros(p);
  c.controls.setConstant(0.5);
  const auto r = rollout(p, c, set);
  for (int k = 0; k <= 8; ++k) EXPECT_DOUBLE_EQ(r.states[0](k, 0), 2.0 + 0.5 * k * p.dt());
}

TEST(Rollout, EulerConvergesAtFirstOrder) {
  std::vector<double> errors;
  for (int S : {16, 32, 64}) {
    auto p = linear_problem(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1), 1.0, S);
    const auto set = fixed_scenarios(p, Eigen::VectorXd::Constant(1, 1.0), 1);
    const auto r = rollout(p, ControlTrajectory::zeros(p), set);
    errors.push_back(std::abs(r.states[0](S, 0) - std::exp(1.0)));
  }
  for (std::size_t a = 1; a < errors.size(); ++a) {
    EXPECT_NEAR(errors[a - 1] / errors[a], 2.0, 0.15);
  }
  EXPECT_LE(errors.back(), std::exp(1.0) / 64);
}

TEST(Rollout, SubstepsRefineTheGrid) {
  auto coarse = linear_problem(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1), 1.0, 16);
  auto fine = coarse;
  fine.substeps = 4;
  auto finest = linear_problem(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1), 1.0, 64);
  const auto r_fine = rollout(fine, ControlTrajectory::zeros(fine),
                              fixed_scenarios(fine, Eigen::VectorXd::Constant(1, 1.0), 1));
  const auto r_finest = rollout(finest, ControlTrajectory::zeros(finest),
                                fixed_scenarios(finest, Eigen::VectorXd::Constant(1, 1.0), 1));
  EXPECT_EQ(r_fine.states[0].rows(), 17);
  EXPECT_NEAR(r_fine.states[0](16, 0), r_finest.states[0](64, 0), 1e-12);
}

TEST(Rollout, SatisfiesEulerMaruyamaRecursion) {
  auto p = pendulum_problem(10);
  const auto set = pendulum_scenarios(p, 4, 3);
  std::mt19937_64 rng(1);
  const auto c = random_controls(p, rng, 2.0);
  const auto r = rollout(p, c, set);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(r.states[i].row(0).transpose(), set.initial_states[i]);
    for (int k = 0; k < 10; ++k) {
      const Eigen::VectorXd x = r.states[i].row(k).transpose();
      const Eigen::VectorXd u = c.controls.row(k).transpose();
      const Eigen::VectorXd next = x + p.drift(x, u, set.parameters[i]).value * p.dt() +
                                   p.diffusion(x, u, set.parameters[i]).value *
                                       set.increments[i].row(k).transpose();
      EXPECT_LT((next - r.states[i].row(k + 1).transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Rollout, DivergenceCarriesIndices) {
  ProblemDefinition p = linear_problem(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1), 1.0, 10);
  p.drift = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return DriftEval{Eigen::VectorXd::Constant(1, x(0) > 1e300 ? x(0) * 1e10 : x(0) * 1e80), {}, {}};
  };
  const auto set = fixed_scenarios(p, Eigen::VectorXd::Constant(1, 1.0), 2);
  try {
    rollout(p, ControlTrajectory::zeros(p), set);
    FAIL() << "expected divergence";
  } catch (const RolloutDivergence& e) {
    EXPECT_EQ(e.scenario(), 0u);
    EXPECT_LT(e.step(), 10u);
    EXPECT_EQ(e.iteration(), -1);
    EXPECT_EQ(e.at_iteration(3).iteration(), 3);
  }
}

TEST(Rollout, RejectsMismatchedInputs) {
  auto p = pendulum_problem(10);
  auto other = pendulum_problem(12);
  const auto set = pendulum_scenarios(other, 2, 1);
  EXPECT_THROW(rollout(p, ControlTrajectory::zeros(p), set), UsageError);
  const auto good = pendulum_scenarios(p, 2, 1);
  EXPECT_THROW(rollout(p, ControlTrajectory::zeros(other), good), UsageError);
}

TEST(Sensitivities, LinearAccumulation) {
  auto p = linear_problem(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2), 1.0, 4);
  const auto set = fixed_scenarios(p, Eigen::Vector2d::Zero(), 1);
  const auto c = ControlTrajectory::zeros(p);
  const auto sens = rollout_sensitivities(p, c, set, rollout(p, c, set));
  for (int k = 0; k <= 4; ++k) {
    for (int s = 0; s < 4; ++s) {
      const Eigen::MatrixXd block = sens.jacobians[0][k].middleCols(2 * s, 2);
      const Eigen::MatrixXd expected =
          s < k ? Eigen::MatrixXd(p.dt() * Eigen::MatrixXd::Identity(2, 2)) : Eigen::MatrixXd::Zero(2, 2);
      EXPECT_TRUE(block.isApprox(expected) || (expected.isZero() && block.isZero())) << k << "," << s;
    }
  }
}

class PendulumSensitivities : public ::testing::TestWithParam<int> {};

TEST_P(PendulumSensitivities, CausalAndMatchFiniteDifferences) {
  auto p = pendulum_problem(8, GetParam());
  const auto set = pendulum_scenarios(p, 3, 17);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto c = random_controls(p, rng, 2.0);
    const auto sens = rollout_sensitivities(p, c, set, rollout(p, c, set));
    for (int i = 0; i < set.count; ++i) {
      EXPECT_TRUE(sens.jacobians[i][0].isZero(0.0));
      for (int k = 0; k <= p.nodes; ++k) {
        EXPECT_TRUE(sens.jacobians[i][k].rightCols((p.nodes - k) * p.control_dim).isZero(0.0));
        auto f = [&](const Eigen::VectorXd& u) {
          const auto cc = ControlTrajectory::from_flat(u, p.nodes, p.control_dim);
          return Eigen::VectorXd(rollout_scenario(p, cc, set, i).row(k).transpose());
        };
        const Eigen::MatrixXd fd = finite_difference_jacobian(f, c.flat());
        EXPECT_LT((fd - sens.jacobians[i][k]).cwiseAbs().maxCoeff(), 1e-6);
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Substeps, PendulumSensitivities, ::testing::Values(1, 3));

TEST(Objective, PureControlCost) {
  auto p = linear_problem(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 2), 2.0, 5);
  const auto set = fixed_scenarios(p, Eigen::VectorXd::Constant(1, 1.0));
  std::mt19937_64 rng(2);
  const auto c = random_controls(p, rng, 1.0);
  const auto r = rollout(p, c, set);
  const auto obj = evaluate_objective(p, c, r, rollout_sensitivities(p, c, set, r), true);
  EXPECT_NEAR(obj.value, p.dt() * c.controls.squaredNorm(), 1e-12);
  EXPECT_TRUE(obj.gradient.isApprox(2 * p.dt() * c.flat()));
  EXPECT_TRUE(obj.hessian.isApprox(2 * p.dt() * Eigen::MatrixXd::Identity(10, 10)));
}

TEST(Objective, TerminalCostWithoutControlAuthority) {
  auto p = linear_problem(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 1), 1.0, 3);
  p.running_cost = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return StageCostEval{}; };
  p.terminal_cost = [](const Eigen::VectorXd& x) {
    return TerminalCostEval{x.squaredNorm(), 2 * x, 2 * Eigen::MatrixXd::Identity(2, 2)};
  };
  ScenarioDistribution dist{VectorDistribution::uniform(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)),
                            VectorDistribution::fixed(Eigen::VectorXd())};
  const auto set = sample_scenarios({3, 0}, 6, 3, {2, 0}, p.dt(), dist);
  const auto c = ControlTrajectory::zeros(p);
  const auto r = rollout(p, c, set);
  const auto obj = evaluate_objective(p, c, r, rollout_sensitivities(p, c, set, r));
  double mean = 0.0;
  for (const auto& x0 : set.initial_states) mean += x0.squaredNorm() / 6;
  EXPECT_NEAR(obj.value, mean, 1e-14);
  EXPECT_TRUE(obj.gradient.isZero(0.0));
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  auto p = pendulum_problem(10);
  const auto set = pendulum_scenarios(p, 5, 23);
  std::mt19937_64 rng(8);
  const auto c = random_controls(p, rng, 2.0);
  const auto r = rollout(p, c, set);
  const auto obj = evaluate_objective(p, c, r, rollout_sensitivities(p, c, set, r));
  auto f = [&](const Eigen::VectorXd& u) {
    const auto cc = ControlTrajectory::from_flat(u, p.nodes, p.control_dim);
    const auto rr = rollout(p, cc, set);
    double v = 0.0;
    for (int i = 0; i < set.count; ++i) v += path_cost(p, cc, rr.states[i]) / set.count;
    return Eigen::VectorXd::Constant(1, v);
  };
  const Eigen::MatrixXd fd = finite_difference_jacobian(f, c.flat());
  EXPECT_LT((fd.transpose() - obj.gradient).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(f(c.flat())(0), obj.value, 1e-12);
}

TEST(Constraints, ConstantConstraintTensor) {
  auto p = pendulum_problem(4);
  p.constraint_count = 2;
  p.constraints = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return ConstraintEval{Eigen::Vector2d(-1, -1), Eigen::MatrixXd::Zero(2, 2), {}};
  };
  const auto set = pendulum_scenarios(p, 3, 2);
  const auto c = ControlTrajectory::zeros(p);
  const auto cs = evaluate_constraints(p, c, rollout(p, c, set), set);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k <= 4; ++k)
      for (int j = 0; j < 2; ++j) EXPECT_EQ(cs.values(i, k, j), -1.0);
}

TEST(Constraints, TerminalEqualityAtGoal) {
  auto p = linear_problem(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2), 1.0, 3);
  const Eigen::Vector2d goal(1.5, -0.5);
  p.equality_count = 2;
  p.terminal_equality = [goal](const Eigen::VectorXd& x) {
    return ConstraintEval{x - goal, Eigen::MatrixXd::Identity(2, 2), {}};
  };
  const auto set = fixed_scenarios(p, goal);
  const auto c = ControlTrajectory::zeros(p);
  const auto r = rollout(p, c, set);
  const auto sens = rollout_sensitivities(p, c, set, r);
  const auto cs = evaluate_constraints(p, c, r, set, &sens);
  EXPECT_TRUE(cs.equality_mean.isZero(0.0));
  // d x_S / d u_s = dt I for every s.
  for (int s = 0; s < 3; ++s) {
    EXPECT_TRUE(cs.equality_jacobian.middleCols(2 * s, 2).isApprox(p.dt() * Eigen::MatrixXd::Identity(2, 2)));
  }
}

TEST(Constraints, SphereAlongStraightLine) {
  // Move along x at unit speed from x = -2 through a unit sphere at the origin.
  auto p = linear_problem(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Identity(3, 3), 4.0, 16);
  p.constraint_count = 1;
  p.constraints = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    const double d = x.norm();
    return ConstraintEval{Eigen::VectorXd::Constant(1, 1.0 - d), -x.transpose() / d, {}};
  };
  const auto set = fixed_scenarios(p, Eigen::Vector3d(-2, 0.3, 0), 1);
  ControlTrajectory c = ControlTrajectory::zeros(p);
  c.controls.col(0).setOnes();
  const auto r = rollout(p, c, set);
  const auto cs = evaluate_constraints(p, c, r, set);
  for (int k = 0; k <= 16; ++k) {
    const double px = -2.0 + k * p.dt();
    const double dist = std::hypot(px, 0.3);
    EXPECT_EQ(cs.values(0, k, 0) > 0.0, dist < 1.0) << k;
    EXPECT_NEAR(cs.values(0, k, 0), 1.0 - dist, 1e-12);
  }
}

TEST(Constraints, ControlJacobianMatchesFiniteDifferences) {
  auto p = pendulum_problem(6);
  const auto set = pendulum_scenarios(p, 2, 4);
  std::mt19937_64 rng(3);
  const auto c = random_controls(p, rng, 2.0);
  const auto r = rollout(p, c, set);
  const auto sens = rollout_sensitivities(p, c, set, r);
  const auto cs = evaluate_constraints(p, c, r, set, &sens);
  const Eigen::MatrixXd jac = constraint_control_jacobian(p, cs, sens);
  auto g = [&](const Eigen::VectorXd& u) {
    const auto cc = ControlTrajectory::from_flat(u, p.nodes, p.control_dim);
    const auto rr = rollout(p, cc, set);
    const auto v = evaluate_constraints(p, cc, rr, set);
    Eigen::VectorXd out(2 * 7);
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k <= 6; ++k) out(i * 7 + k) = v.values(i, k, 0);
    return out;
  };
  EXPECT_LT((finite_difference_jacobian(g, c.flat()) - jac).cwiseAbs().maxCoeff(), 1e-6);
  auto h = [&](const Eigen::VectorXd& u) {
    const auto cc = ControlTrajectory::from_flat(u, p.nodes, p.control_dim);
    return Eigen::VectorXd(evaluate_constraints(p, cc, rollout(p, cc, set), set).equality_mean);
  };
  EXPECT_LT((finite_difference_jacobian(h, c.flat()) - cs.equality_jacobian).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ProblemDefinition, ValidateRejectsBadBoxes) {
  auto p = pendulum_problem(4);
  EXPECT_NO_THROW(p.validate());
  p.control_lower(0) = 10.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = pendulum_problem(4);
  p.nodes = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = pendulum_problem(4);
  p.constraints = nullptr;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ControlTrajectory, FlatRoundTripAndBounds) {
  auto p = pendulum_problem(3);
  ControlTrajectory c = ControlTrajectory::zeros(p);
  c.controls << 1, 2, 3;
  EXPECT_EQ(ControlTrajectory::from_flat(c.flat(), 3, 1).controls, c.controls);
  EXPECT_TRUE(c.within_bounds(p));
  c.controls(1, 0) = 6;
  EXPECT_FALSE(c.within_bounds(p));
}

TEST(OcpCsv, Layouts) {
  auto p = linear_problem(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2), 1.0, 2);
  const auto set = fixed_scenarios(p, Eigen::Vector2d(0, 1), 2);
  ControlTrajectory c = ControlTrajectory::zeros(p);
  c.controls << 0.5, 0, 0.25, 1;
  std::ostringstream roll, ctrl;
  write_rollout_csv(roll, rollout(p, c, set));
  write_controls_csv(ctrl, c, p.dt());
  EXPECT_EQ(ctrl.str(), "step,time_s,u_0,u_1\n0,0,0.5,0\n1,0.5,0.25,1\n");
  EXPECT_EQ(roll.str().substr(0, roll.str().find('\n')), "scenario_id,step,x_0,x_1");
  EXPECT_NE(roll.str().find("\n1,2,0.375,1.5\n"), std::string::npos);
}

}  // namespace
}  // namespace riskscp
