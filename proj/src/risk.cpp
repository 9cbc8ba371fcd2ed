#include "riskscp/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "riskscp/errors.hpp"

namespace riskscp {
namespace {

void check_sample(std::span<const double> sample, const char* op) {
  if (sample.empty()) throw UsageError(std::string(op) + ": empty sample");
  for (double v : sample) {
    if (!std::isfinite(v)) throw UsageError(std::string(op) + ": non-finite sample value");
  }
}

// Largest number of samples allowed strictly above V@R. The small slack
// absorbs rounding in alpha * M when it is mathematically an integer.
std::size_t tail_count(std::size_t m, double alpha) {
  const double budget = alpha * static_cast<double>(m);
  return static_cast<std::size_t>(std::floor(budget * (1.0 + 1e-12)));
}

double var_sorted(const std::vector<double>& sorted, double alpha) {
  const std::size_t m = sorted.size();
  return sorted[m - 1 - tail_count(m, alpha)];
}

}  // namespace

RiskLevel::RiskLevel(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("risk level alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

double empirical_var(std::span<const double> sample, RiskLevel level) {
  check_sample(sample, "empirical_var");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  return var_sorted(sorted, level.alpha());
}

AvarResult empirical_avar(std::span<const double> sample, RiskLevel level) {
  check_sample(sample, "empirical_avar");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double t = var_sorted(sorted, level.alpha());
  // Objective is piecewise linear in t with kinks at the samples; V@R is the
  // left-most point where the right derivative becomes non-negative.
  double excess = 0.0;
  for (auto it = sorted.rbegin(); it != sorted.rend() && *it > t; ++it) excess += *it - t;
  const double m = static_cast<double>(sorted.size());
  return {t + excess / (level.alpha() * m), t};
}

ConstraintTensor::ConstraintTensor(int scenarios, int nodes, int constraints, int first_node)
    : scenarios_(scenarios), nodes_(nodes), constraints_(constraints), first_node_(first_node) {
  if (scenarios < 0 || nodes < 0 || constraints < 0 || first_node < 0 ||
      (nodes > 0 && first_node >= nodes)) {
    throw UsageError("ConstraintTensor: invalid dimensions");
  }
  data_.assign(static_cast<std::size_t>(scenarios) * nodes * constraints, 0.0);
}

double ConstraintTensor::scenario_max(int i) const {
  double best = -std::numeric_limits<double>::infinity();
  for (int k = first_node_; k < nodes_; ++k) {
    for (int j = 0; j < constraints_; ++j) best = std::max(best, (*this)(i, k, j));
  }
  return best;
}

std::vector<double> ConstraintTensor::scenario_maxima() const {
  std::vector<double> z(scenarios_);
  for (int i = 0; i < scenarios_; ++i) z[i] = scenario_max(i);
  return z;
}

EpigraphResiduals epigraph_residuals(const ConstraintTensor& values, double t,
                                     std::span<const double> y, RiskLevel level) {
  const int m = values.scenarios();
  if (static_cast<int>(y.size()) != m) {
    throw UsageError("epigraph_residuals: y has " + std::to_string(y.size()) +
                     " entries for " + std::to_string(m) + " scenarios");
  }
  if (m == 0 || values.constraints() == 0) {
    throw UsageError("epigraph_residuals: empty constraint tensor");
  }
  EpigraphResiduals r;
  r.per_scenario_slack.resize(m);
  double sum_y = 0.0;
  for (int i = 0; i < m; ++i) {
    if (!std::isfinite(y[i])) throw UsageError("epigraph_residuals: non-finite y");
    sum_y += y[i];
    const double slack = std::max({0.0, values.scenario_max(i) - t - y[i], -y[i]});
    r.per_scenario_slack(i) = slack;
    r.pointwise_max_violation = std::max(r.pointwise_max_violation, slack);
  }
  r.aggregate = static_cast<double>(m) * level.alpha() * t + sum_y;
  return r;
}

EpigraphPoint optimal_epigraph_point(const ConstraintTensor& values, RiskLevel level) {
  const std::vector<double> z = values.scenario_maxima();
  EpigraphPoint p;
  p.t = empirical_var(z, level);
  p.y.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p.y[i] = std::max(0.0, z[i] - p.t);
  return p;
}

}  // namespace riskscp
