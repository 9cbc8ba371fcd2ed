#include <gtest/gtest.h>

#include <random>

#include "riskscp/errors.hpp"
#include "riskscp/risk.hpp"
#include "support/oracles.hpp"

namespace riskscp {
namespace {

using testing::avar_by_grid;
using testing::avar_objective;
using testing::var_by_enumeration;

TEST(RiskLevel, RejectsOutsideOpenInterval) {
  EXPECT_THROW(RiskLevel(0.0), ConfigError);
  EXPECT_THROW(RiskLevel(1.0), ConfigError);
  EXPECT_THROW(RiskLevel(1.5), ConfigError);
  EXPECT_THROW(RiskLevel(-0.1), ConfigError);
  EXPECT_NO_THROW(RiskLevel(0.3));
}

TEST(EmpiricalVar, SmallExamples) {
  const std::vector<double> z{1, 2, 3, 4};
  EXPECT_EQ(empirical_var(z, RiskLevel(0.5)), 2.0);
  EXPECT_EQ(empirical_var(z, RiskLevel(0.25)), 3.0);
  const std::vector<double> c(7, -2.5);
  EXPECT_EQ(empirical_var(c, RiskLevel(0.13)), -2.5);
}

TEST(EmpiricalAvar, SmallExamples) {
  const std::vector<double> z{4, 2, 1, 3};
  const auto half = empirical_avar(z, RiskLevel(0.5));
  EXPECT_EQ(half.value, 3.5);
  EXPECT_EQ(half.minimizer, 2.0);
  EXPECT_EQ(empirical_avar(z, RiskLevel(0.25)).value, 4.0);
  const std::vector<double> c(5, 1.25);
  EXPECT_EQ(empirical_avar(c, RiskLevel(0.37)).value, 1.25);
}

TEST(EmpiricalRisk, RejectsBadSamples) {
  EXPECT_THROW(empirical_var(std::vector<double>{}, RiskLevel(0.1)), UsageError);
  EXPECT_THROW(empirical_avar(std::vector<double>{}, RiskLevel(0.1)), UsageError);
  EXPECT_THROW(empirical_avar(std::vector<double>{1.0, std::nan("")}, RiskLevel(0.1)), UsageError);
}

class RandomSamples : public ::testing::Test {
 protected:
  std::mt19937_64 rng{12345};
  std::vector<double> draw(int m) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> z(m);
    for (double& v : z) v = std::round(g(rng) * 8.0) / 4.0;  // coarse grid forces ties
    return z;
  }
};

TEST_F(RandomSamples, MatchBruteForceOracle) {
  std::uniform_int_distribution<int> size(1, 200);
  std::uniform_real_distribution<double> level(0.01, 0.99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto z = draw(size(rng));
    const double alpha = level(rng);
    const double var = empirical_var(z, RiskLevel(alpha));
    const auto avar = empirical_avar(z, RiskLevel(alpha));
    EXPECT_EQ(var, var_by_enumeration(z, alpha));
    const double oracle = avar_by_grid(z, alpha);
    EXPECT_LE(std::abs(avar.value - oracle), 1e-12 * std::max(1.0, std::abs(oracle)));
    EXPECT_EQ(avar.minimizer, var);
    EXPECT_LE(var, avar.value + 1e-12);
    EXPECT_LE(avar.value, *std::max_element(z.begin(), z.end()) + 1e-12);
  }
}

TEST_F(RandomSamples, CoherenceProperties) {
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = draw(40);
    const RiskLevel level(0.2);
    const double base = empirical_avar(z, level).value;
    std::vector<double> shifted(z), scaled(z);
    for (double& v : shifted) v += 0.75;  // exact in binary
    for (double& v : scaled) v *= 4.0;
    EXPECT_EQ(empirical_avar(shifted, level).value, base + 0.75);
    EXPECT_EQ(empirical_avar(scaled, level).value, 4.0 * base);
    EXPECT_GE(empirical_avar(z, RiskLevel(0.1)).value, base);
    EXPECT_GE(base, empirical_avar(z, RiskLevel(0.3)).value);
  }
}

ConstraintTensor random_tensor(std::mt19937_64& rng, int scenarios, int nodes, int constraints) {
  std::normal_distribution<double> g(-0.5, 1.0);
  ConstraintTensor tensor(scenarios, nodes, constraints);
  for (int i = 0; i < scenarios; ++i)
    for (int k = 0; k < nodes; ++k)
      for (int j = 0; j < constraints; ++j) tensor(i, k, j) = g(rng);
  return tensor;
}

TEST(EpigraphResiduals, UniformlySatisfied) {
  ConstraintTensor tensor(4, 3, 2);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 2; ++j) tensor(i, k, j) = -1.0;
  const std::vector<double> y(4, 0.0);
  const auto r = epigraph_residuals(tensor, -1.0, y, RiskLevel(0.25));
  EXPECT_DOUBLE_EQ(r.aggregate, -4 * 0.25);
  EXPECT_EQ(r.per_scenario_slack.maxCoeff(), 0.0);
  EXPECT_TRUE(r.feasible());
}

TEST(EpigraphResiduals, SingleViolatedValue) {
  ConstraintTensor tensor(1, 1, 1);
  tensor(0, 0, 0) = 0.5;
  const std::vector<double> y{0.0};
  const auto r = epigraph_residuals(tensor, 0.0, y, RiskLevel(0.1));
  EXPECT_EQ(r.per_scenario_slack(0), 0.5);
  EXPECT_EQ(r.pointwise_max_violation, 0.5);
  EXPECT_FALSE(r.feasible());
}

TEST(EpigraphResiduals, NegativeYIsSlack) {
  ConstraintTensor tensor(1, 1, 1);
  tensor(0, 0, 0) = -5.0;
  const std::vector<double> y{-0.25};
  EXPECT_EQ(epigraph_residuals(tensor, 0.0, y, RiskLevel(0.1)).per_scenario_slack(0), 0.25);
}

TEST(EpigraphResiduals, ExcludedNodesIgnored) {
  ConstraintTensor tensor(1, 3, 1, 1);
  tensor(0, 0, 0) = 10.0;
  tensor(0, 1, 0) = -1.0;
  tensor(0, 2, 0) = -2.0;
  EXPECT_EQ(tensor.scenario_max(0), -1.0);
}

TEST(EpigraphResiduals, DimensionMismatch) {
  ConstraintTensor tensor(3, 2, 1);
  EXPECT_THROW(epigraph_residuals(tensor, 0.0, std::vector<double>(2, 0.0), RiskLevel(0.1)), UsageError);
  EXPECT_THROW(epigraph_residuals(tensor, 0.0, std::vector<double>{0, std::nan(""), 0}, RiskLevel(0.1)),
               UsageError);
}

TEST(EpigraphResiduals, EquivalentToAvarSign) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> level(0.05, 0.95);
  for (int trial = 0; trial < 300; ++trial) {
    const ConstraintTensor tensor = random_tensor(rng, 5, 4, 3);
    const RiskLevel alpha(level(rng));
    const auto point = optimal_epigraph_point(tensor, alpha);
    const auto r = epigraph_residuals(tensor, point.t, point.y, alpha);
    const auto z = tensor.scenario_maxima();
    EXPECT_EQ(r.feasible(), empirical_avar(z, alpha).value <= 0.0);
    // The aggregate row at the optimal point is (M alpha) AV@R.
    const double oracle = avar_by_grid(z, alpha.alpha()) * 5 * alpha.alpha();
    EXPECT_NEAR(r.aggregate, oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(EpigraphResiduals, OptimalPointMinimizesAggregate) {
  std::mt19937_64 rng(7);
  const ConstraintTensor tensor = random_tensor(rng, 8, 3, 2);
  const RiskLevel alpha(0.3);
  const auto best = optimal_epigraph_point(tensor, alpha);
  const double best_aggregate = epigraph_residuals(tensor, best.t, best.y, alpha).aggregate;
  const auto z = tensor.scenario_maxima();
  for (double t = -4.0; t <= 4.0; t += 0.01) {
    std::vector<double> y(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = std::max(0.0, z[i] - t);
    EXPECT_GE(epigraph_residuals(tensor, t, y, alpha).aggregate, best_aggregate - 1e-12);
    EXPECT_NEAR(avar_objective(z, 0.3, t) * 8 * 0.3, epigraph_residuals(tensor, t, y, alpha).aggregate, 1e-12);
  }
}

}  // namespace
}  // namespace riskscp
