#include "riskscp/evaluation.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "riskscp/csv.hpp"
#include "riskscp/errors.hpp"

namespace riskscp {

nlohmann::json ValidationReport::to_json() const {
  return {{"n_val", n_val},
          {"alpha", alpha},
          {"violations", violations},
          {"violation_rate", violation_rate},
          {"violation_standard_error", violation_standard_error},
          {"empirical_var", empirical_var},
          {"empirical_avar", empirical_avar},
          {"mean_worst_case", mean_worst_case},
          {"mean_cost", mean_cost},
          {"diverged", diverged}};
}

ValidationReport monte_carlo_validate(const ProblemDefinition& problem,
                                      const ScenarioDistribution& distribution,
                                      const ControlTrajectory& controls, RandomSeed seed, int n_val,
                                      RiskLevel level) {
  problem.validate();
  if (n_val < 1) throw UsageError("n_val must be >= 1");
  if (seed.stream_id == kOptimizationStream) {
    throw UsageError("validation must not draw from the optimization stream");
  }
  if (!controls.within_bounds(problem, 1e-9)) throw UsageError("controls violate the control box");

  const int steps = problem.nodes * problem.substeps;
  const double h = problem.dt() / problem.substeps;
  const ScenarioSet set = sample_scenarios(seed, n_val, steps, {problem.state_dim, problem.param_dim},
                                           h, distribution);
  const int N = problem.constraint_count;
  const int first = problem.first_constraint_node();
  constexpr double kDiverged = std::numeric_limits<double>::max();

  ValidationReport r;
  r.n_val = n_val;
  r.alpha = level.alpha();
  r.worst_case.resize(n_val);
  double cost_sum = 0.0;
  double z_sum = 0.0;
  for (int i = 0; i < n_val; ++i) {
    Eigen::MatrixXd path;
    try {
      path = rollout_scenario(problem, controls, set, i);
    } catch (const RolloutDivergence&) {
      ++r.diverged;
      r.worst_case[i] = kDiverged;
      continue;
    }
    double z = -std::numeric_limits<double>::infinity();
    for (int k = first; k <= problem.nodes; ++k) {
      const ConstraintEval g = problem.constraints(path.row(k).transpose(), set.parameters[i]);
      for (int j = 0; j < N; ++j) z = std::max(z, g.value(j));
    }
    r.worst_case[i] = z;
    z_sum += z;
    cost_sum += path_cost(problem, controls, path);
  }
  for (double z : r.worst_case) r.violations += z > 0.0 ? 1 : 0;
  r.violation_rate = static_cast<double>(r.violations) / n_val;
  r.violation_standard_error = std::sqrt(r.violation_rate * (1.0 - r.violation_rate) / n_val);
  if (N > 0) {
    r.empirical_var = empirical_var(r.worst_case, level);
    r.empirical_avar = empirical_avar(r.worst_case, level).value;
  }
  const int finite = n_val - r.diverged;
  r.mean_worst_case = finite > 0 ? z_sum / finite : kDiverged;
  r.mean_cost = finite > 0 ? cost_sum / finite : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_histogram_csv(std::ostream& out, const ValidationReport& report) {
  out << "scenario_id,worst_case_value\n";
  for (std::size_t i = 0; i < report.worst_case.size(); ++i) {
    out << i << ',';
    csv::put(out, report.worst_case[i]);
    out << '\n';
  }
}

}  // namespace riskscp
