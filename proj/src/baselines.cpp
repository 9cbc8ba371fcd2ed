#include "riskscp/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "riskscp/errors.hpp"
#include "riskscp/normal.hpp"

namespace riskscp {

ScenarioSet mean_scenario(const ProblemDefinition& problem, const ScenarioDistribution& distribution) {
  const Eigen::VectorXd x0 = distribution.initial_state.mean();
  if (x0.size() != problem.state_dim) throw UsageError("initial-state distribution has wrong dimension");
  const Eigen::VectorXd xi = distribution.parameters.mean();
  if (xi.size() != problem.param_dim) throw UsageError("parameter distribution has wrong dimension");
  return nominal_scenario(x0, xi, problem.nodes * problem.substeps, problem.dt() / problem.substeps);
}

SolveReport solve_deterministic(const ProblemDefinition& problem,
                                const ScenarioDistribution& distribution, RiskLevel level,
                                const ScpConfig& config, const ControlTrajectory& initial_guess) {
  // With one scenario the sampled AV@R is the scenario maximum at every alpha,
  // so the epigraph rows reduce to G <= 0 along the nominal path.
  SolveReport report = solve_socp(problem, mean_scenario(problem, distribution), level, config,
                                  initial_guess);
  report.method = "deterministic";
  return report;
}

GaussianBeliefTrajectory propagate_gaussian(const ProblemDefinition& problem,
                                            const ControlTrajectory& controls,
                                            const GaussianBelief& initial_belief,
                                            const Eigen::VectorXd& mean_parameters) {
  const int n = problem.state_dim;
  if (initial_belief.mean.size() != n || initial_belief.covariance.rows() != n ||
      initial_belief.covariance.cols() != n) {
    throw UsageError("initial belief has wrong dimension");
  }
  if (controls.controls.rows() != problem.nodes || controls.controls.cols() != problem.control_dim) {
    throw UsageError("controls must be S x m");
  }
  const double h = problem.dt() / problem.substeps;
  GaussianBeliefTrajectory out;
  out.means.resize(problem.nodes + 1, n);
  out.covariances.reserve(problem.nodes + 1);
  Eigen::VectorXd mu = initial_belief.mean;
  Eigen::MatrixXd sigma = initial_belief.covariance;
  out.means.row(0) = mu.transpose();
  out.covariances.push_back(sigma);
  for (int k = 0; k < problem.nodes; ++k) {
    const Eigen::VectorXd u = controls.controls.row(k).transpose();
    for (int s = 0; s < problem.substeps; ++s) {
      const DriftEval b = problem.drift(mu, u, mean_parameters);
      const DiffusionEval d = problem.diffusion(mu, u, mean_parameters);
      Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
      if (b.dx.size() != 0) A += b.dx * h;
      mu += b.value * h;
      sigma = A * sigma * A.transpose() + d.value * d.value.transpose() * h;
      sigma = (0.5 * (sigma + sigma.transpose())).eval();
      if (!mu.allFinite() || !sigma.allFinite()) {
        throw RolloutDivergence(0, static_cast<std::size_t>(k * problem.substeps + s));
      }
    }
    out.means.row(k + 1) = mu.transpose();
    out.covariances.push_back(sigma);
  }
  return out;
}

RiskAllocation uniform_allocation(const ProblemDefinition& problem, RiskLevel level) {
  const int N = problem.constraint_count;
  const int first = problem.first_constraint_node();
  const int active = problem.nodes + 1 - first;
  RiskAllocation a;
  a.alphas = Eigen::MatrixXd::Zero(N, problem.nodes + 1);
  if (N == 0 || active <= 0) return a;
  a.alphas.rightCols(active).setConstant(level.alpha() / (static_cast<double>(N) * active));
  return a;
}

RiskAllocation reallocate(const RiskAllocation& current, const Eigen::MatrixXd& used,
                          const Eigen::MatrixXd& tightened_values, RiskLevel level) {
  if (used.rows() != current.alphas.rows() || used.cols() != current.alphas.cols() ||
      tightened_values.rows() != used.rows() || tightened_values.cols() != used.cols()) {
    throw UsageError("reallocation inputs must match the allocation shape");
  }
  constexpr double kActiveTol = -1e-6;
  const double alpha = level.alpha();
  const double floor = 1e-9 * alpha;
  RiskAllocation next = current;
  double kept = 0.0;
  int tight = 0;
  for (int j = 0; j < used.rows(); ++j) {
    for (int k = 0; k < used.cols(); ++k) {
      const double a = current.alphas(j, k);
      if (a <= 0.0) continue;
      if (tightened_values(j, k) >= kActiveTol) {
        ++tight;
        continue;
      }
      // Halfway toward the risk actually consumed at the current plan.
      const double target = std::max(used(j, k), floor);
      next.alphas(j, k) = std::min(a, 0.5 * (a + target));
      kept += next.alphas(j, k);
    }
  }
  if (tight == 0) return current;
  const double share = std::max(alpha - kept, 0.0) / tight;
  for (int j = 0; j < used.rows(); ++j) {
    for (int k = 0; k < used.cols(); ++k) {
      if (current.alphas(j, k) > 0.0 && tightened_values(j, k) >= kActiveTol) {
        next.alphas(j, k) = std::max(share, floor);
      }
    }
  }
  double total = next.total();
  if (total > alpha) {
    next.alphas *= alpha / total;
    while (next.total() > alpha) next.alphas *= 1.0 - 1e-15;
  }
  return next;
}

double quantile_backoff(double alpha_jk, const Eigen::VectorXd& gradient,
                        const Eigen::MatrixXd& covariance) {
  if (!(alpha_jk > 0.0 && alpha_jk < 1.0)) throw UsageError("risk budget must lie in (0, 1)");
  const double var = gradient.dot(covariance * gradient);
  return normal_quantile(1.0 - alpha_jk) * std::sqrt(std::max(var, 0.0));
}

namespace {

// Linearized spread of every (j, k) constraint along the belief trajectory.
struct ConstraintSpread {
  Eigen::MatrixXd value;  // N x (S + 1), at the mean
  Eigen::MatrixXd std;    // N x (S + 1)
};

ConstraintSpread constraint_spread(const ProblemDefinition& problem,
                                   const GaussianBeliefTrajectory& belief,
                                   const Eigen::VectorXd& xi, const Eigen::MatrixXd& param_cov,
                                   bool parameter_uncertainty) {
  const int N = problem.constraint_count;
  ConstraintSpread s;
  s.value.resize(N, problem.nodes + 1);
  s.std.resize(N, problem.nodes + 1);
  for (int k = 0; k <= problem.nodes; ++k) {
    const ConstraintEval g = problem.constraints(belief.means.row(k).transpose(), xi);
    const Eigen::MatrixXd& P = belief.covariances[k];
    for (int j = 0; j < N; ++j) {
      const Eigen::VectorXd gx = g.dx.row(j).transpose();
      double var = gx.dot(P * gx);
      if (parameter_uncertainty && g.dxi.rows() == N && g.dxi.cols() == param_cov.rows()) {
        const Eigen::VectorXd gxi = g.dxi.row(j).transpose();
        var += gxi.dot(param_cov * gxi);
      }
      s.value(j, k) = g.value(j);
      s.std(j, k) = std::sqrt(std::max(var, 0.0));
    }
  }
  return s;
}

}  // namespace

SolveReport solve_gaussian_boole(const ProblemDefinition& problem,
                                 const ScenarioDistribution& distribution, RiskLevel level,
                                 const ScpConfig& config, const ControlTrajectory& initial_guess,
                                 const GaussianBooleOptions& options) {
  const ScenarioSet nominal = mean_scenario(problem, distribution);
  const GaussianBelief initial{distribution.initial_state.mean(),
                               distribution.initial_state.covariance()};
  const Eigen::VectorXd xi = nominal.parameters[0];
  const Eigen::MatrixXd param_cov =
      problem.param_dim > 0 ? distribution.parameters.covariance() : Eigen::MatrixXd();
  const int N = problem.constraint_count;
  const int first = problem.first_constraint_node();

  RiskAllocation allocation = uniform_allocation(problem, level);
  Eigen::MatrixXd last_backoff;

  OffsetHook hook = [&](int iteration, const ControlTrajectory& current, const StateRollout&,
                        const ConstraintSet&) {
    const GaussianBeliefTrajectory belief = propagate_gaussian(problem, current, initial, xi);
    const ConstraintSpread spread =
        constraint_spread(problem, belief, xi, param_cov, options.parameter_uncertainty);
    if (options.allocation == AllocationMode::kIterative && iteration > 0 && last_backoff.size() > 0) {
      Eigen::MatrixXd used = Eigen::MatrixXd::Zero(N, problem.nodes + 1);
      for (int j = 0; j < N; ++j) {
        for (int k = first; k <= problem.nodes; ++k) {
          const double sd = spread.std(j, k);
          used(j, k) = sd > 0.0 ? normal_cdf(spread.value(j, k) / sd)
                                : (spread.value(j, k) > 0.0 ? 1.0 : 0.0);
        }
      }
      allocation = reallocate(allocation, used, spread.value + last_backoff, level);
    }
    last_backoff = Eigen::MatrixXd::Zero(N, problem.nodes + 1);
    ConstraintTensor offsets(1, problem.nodes + 1, N, first);
    for (int k = first; k <= problem.nodes; ++k) {
      for (int j = 0; j < N; ++j) {
        const double a = allocation.alphas(j, k);
        const double b = spread.std(j, k) > 0.0 ? normal_quantile(1.0 - a) * spread.std(j, k) : 0.0;
        last_backoff(j, k) = b;
        offsets(0, k, j) = b;
      }
    }
    return offsets;
  };

  SolveReport report = solve_socp_with_offsets(problem, nominal, level, config, initial_guess, hook);
  report.method = "gaussian_boole";
  return report;
}

}  // namespace riskscp
