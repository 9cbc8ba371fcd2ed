#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace riskscp {

/// Risk level alpha in the open interval (0, 1).
class RiskLevel {
 public:
  explicit RiskLevel(double alpha);
  double alpha() const noexcept { return alpha_; }

 private:
  double alpha_;
};

/// Value-at-risk of an empirical distribution: the smallest sample value t with
/// #{i : z_i > t} <= alpha * M.
double empirical_var(std::span<const double> sample, RiskLevel level);

struct AvarResult {
  double value = 0.0;
  double minimizer = 0.0;  // the t attaining the infimum; equals empirical_var
};

/// Average value-at-risk min_t t + 1/(alpha M) sum_i max(z_i - t, 0).
AvarResult empirical_avar(std::span<const double> sample, RiskLevel level);

/// Constraint values G_j(x^i_k, xi^i) over (scenario, node, constraint).
/// Nodes before `first_node` are stored but ignored by every maximum.
class ConstraintTensor {
 public:
  ConstraintTensor() = default;
  ConstraintTensor(int scenarios, int nodes, int constraints, int first_node = 0);

  int scenarios() const noexcept { return scenarios_; }
  int nodes() const noexcept { return nodes_; }
  int constraints() const noexcept { return constraints_; }
  int first_node() const noexcept { return first_node_; }

  double& operator()(int i, int k, int j) { return data_[index(i, k, j)]; }
  double operator()(int i, int k, int j) const { return data_[index(i, k, j)]; }

  /// max over active nodes and constraints for scenario i (-inf if none).
  double scenario_max(int i) const;
  /// Per-scenario worst-case values Z_i.
  std::vector<double> scenario_maxima() const;

 private:
  std::size_t index(int i, int k, int j) const {
    return (static_cast<std::size_t>(i) * nodes_ + k) * constraints_ + j;
  }

  int scenarios_ = 0;
  int nodes_ = 0;
  int constraints_ = 0;
  int first_node_ = 0;
  std::vector<double> data_;
};

struct EpigraphResiduals {
  /// (M alpha) t + sum_i y_i; must be <= 0.
  double aggregate = 0.0;
  /// max(0, max_{j,k} G - t - y_i, -y_i); must be 0.
  Eigen::VectorXd per_scenario_slack;
  /// Largest entry of per_scenario_slack.
  double pointwise_max_violation = 0.0;

  bool feasible() const { return aggregate <= 0.0 && pointwise_max_violation == 0.0; }
};

/// Residuals of the smooth epigraph form of the sampled AV@R constraint
/// at auxiliary variables (t, y).
EpigraphResiduals epigraph_residuals(const ConstraintTensor& values, double t,
                                     std::span<const double> y, RiskLevel level);

struct EpigraphPoint {
  double t = 0.0;
  std::vector<double> y;
};

/// The (t, y) minimizing the aggregate row subject to zero slacks:
/// t = V@R of the scenario maxima, y_i = max(0, Z_i - t).
EpigraphPoint optimal_epigraph_point(const ConstraintTensor& values, RiskLevel level);

}  // namespace riskscp
