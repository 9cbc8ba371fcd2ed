#pragma once

#include <Eigen/Dense>
#include <vector>

#include "riskscp/ocp.hpp"
#include "riskscp/sampling.hpp"
#include "riskscp/scp.hpp"

namespace riskscp {

/// The nominal scenario: mean initial state, mean parameters, no noise.
ScenarioSet mean_scenario(const ProblemDefinition& problem, const ScenarioDistribution& distribution);

/// Plans on the nominal scenario only, with G <= 0 enforced pointwise.
SolveReport solve_deterministic(const ProblemDefinition& problem,
                                const ScenarioDistribution& distribution, RiskLevel level,
                                const ScpConfig& config, const ControlTrajectory& initial_guess);

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Linearized mean / covariance trajectory. means is (S + 1) x n.
struct GaussianBeliefTrajectory {
  Eigen::MatrixXd means;
  std::vector<Eigen::MatrixXd> covariances;
};

/// mu <- mu + b h, Sigma <- A Sigma A^T + sigma sigma^T h with A = I + db/dx h,
/// applied per Euler substep. Throws RolloutDivergence on non-finite values.
GaussianBeliefTrajectory propagate_gaussian(const ProblemDefinition& problem,
                                            const ControlTrajectory& controls,
                                            const GaussianBelief& initial_belief,
                                            const Eigen::VectorXd& mean_parameters);

/// Per-(constraint, node) risk budgets, N x (S + 1). Inactive nodes hold 0.
struct RiskAllocation {
  Eigen::MatrixXd alphas;

  double total() const { return alphas.sum(); }
};

enum class AllocationMode { kUniform, kIterative };

/// alpha / (N * active nodes) on every active (j, k).
RiskAllocation uniform_allocation(const ProblemDefinition& problem, RiskLevel level);

/// Moves budget from slack (j, k) pairs to the tight ones. `used` is the
/// linearized violation probability of each pair at the current plan. The
/// result is strictly positive on active pairs and sums to at most alpha.
RiskAllocation reallocate(const RiskAllocation& current, const Eigen::MatrixXd& used,
                          const Eigen::MatrixXd& tightened_values, RiskLevel level);

/// Phi^{-1}(1 - alpha_jk) sqrt(g^T Sigma g) for one pair.
double quantile_backoff(double alpha_jk, const Eigen::VectorXd& gradient,
                        const Eigen::MatrixXd& covariance);

struct GaussianBooleOptions {
  AllocationMode allocation = AllocationMode::kUniform;
  /// Include the constraint's parameter sensitivity (when the scenario provides
  /// one) with the parameter covariance.
  bool parameter_uncertainty = true;
};

/// Quantile-tightened pointwise chance constraints on the mean trajectory,
/// solved by the same SCP loop on the nominal scenario.
SolveReport solve_gaussian_boole(const ProblemDefinition& problem,
                                 const ScenarioDistribution& distribution, RiskLevel level,
                                 const ScpConfig& config, const ControlTrajectory& initial_guess,
                                 const GaussianBooleOptions& options = {});

}  // namespace riskscp
