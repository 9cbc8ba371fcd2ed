#pragma once

#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "riskscp/ocp.hpp"
#include "riskscp/risk.hpp"
#include "riskscp/sampling.hpp"

namespace riskscp {

inline constexpr int kDefaultValidationSamples = 10000;

struct ValidationReport {
  int n_val = 0;
  double alpha = 0.0;
  int violations = 0;
  double violation_rate = 0.0;
  /// sqrt(p (1 - p) / n_val) at the observed rate.
  double violation_standard_error = 0.0;
  double empirical_var = 0.0;
  double empirical_avar = 0.0;
  double mean_worst_case = 0.0;
  /// Sample-average objective over the scenarios that did not diverge.
  double mean_cost = 0.0;
  int diverged = 0;
  /// Z_i = max over active nodes and constraints; diverged scenarios hold the
  /// largest finite double.
  std::vector<double> worst_case;

  nlohmann::json to_json() const;
};

/// Rolls `controls` out on n_val fresh draws and summarizes the per-scenario
/// worst-case constraint values. `seed` must use the validation stream.
ValidationReport monte_carlo_validate(const ProblemDefinition& problem,
                                      const ScenarioDistribution& distribution,
                                      const ControlTrajectory& controls, RandomSeed seed, int n_val,
                                      RiskLevel level);

/// `scenario_id,worst_case_value`, one row per validation scenario.
void write_histogram_csv(std::ostream& out, const ValidationReport& report);

}  // namespace riskscp
