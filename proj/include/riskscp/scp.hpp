#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskscp/ocp.hpp"
#include "riskscp/qp.hpp"
#include "riskscp/risk.hpp"

namespace riskscp {

struct ScpConfig {
  int max_iterations = 10;
  /// Stop once ||u^k - u^{k-1}|| / ||u^k|| falls below this.
  double convergence_tol = 0.01;
  /// w in the proximal term w ||du||^2.
  double trust_region_weight = 1e-3;
  /// Per-component box |du| <= radius.
  double trust_region_radius = 1e3;
  /// Shrink the radius when the merit function increases, expand otherwise.
  bool adaptive_trust_region = false;
  /// Iterations solved without the AV@R epigraph rows.
  int risk_constraint_warmup = 2;
  /// Half-width of the interval on the sample-mean terminal equality.
  double delta_M = 1e-3;
  /// Tightening: enforce sampled AV@R <= -epsilon_margin.
  double epsilon_margin = 0.0;
  double subproblem_tol = 1e-3;
  int subproblem_max_iterations = 100;
  /// Linear penalty on the feasibility slacks.
  double slack_penalty = 1e4;

  /// Throws ConfigError when an invariant fails.
  void validate() const;
};

/// delta_M = C M^(epsilon - 1/2), the shrinking padding schedule.
double delta_schedule(double C, int sample_count, double epsilon);

/// Variable layout (du, t, y, terminal slacks, aggregate slack) of a subproblem.
struct SubproblemLayout {
  int controls = 0;    // S m
  int scenarios = 0;   // M
  int equalities = 0;  // n_h

  int t() const { return controls; }
  int y(int i) const { return controls + 1 + i; }
  int slack_upper(int h) const { return controls + 1 + scenarios + h; }
  int slack_lower(int h) const { return controls + 1 + scenarios + equalities + h; }
  int slack_aggregate() const { return controls + 1 + scenarios + 2 * equalities; }
  int size() const { return slack_aggregate() + 1; }
};

/// Convex QP in the step du plus the epigraph variables. Row order: terminal
/// interval rows, then (when risk rows are active) one epigraph row per
/// (scenario, active node, constraint) in that nesting order, then the
/// aggregate row.
struct ConvexSubproblem {
  QuadraticProgram qp;
  SubproblemLayout layout;
  bool risk_rows = false;
  int epigraph_row_begin = 0;
  int epigraph_row_count = 0;
  int aggregate_row = -1;
  int first_node = 0;
  int nodes = 0;        // S + 1
  int constraints = 0;  // N
  double alpha = 0.0;

  int epigraph_row(int i, int k, int j) const {
    return epigraph_row_begin + (i * (nodes - first_node) + (k - first_node)) * constraints + j;
  }
};

/// Everything the subproblem needs from the current iterate.
struct Linearization {
  int scenarios = 0;
  ObjectiveEval objective;
  ConstraintSet constraints;
  Eigen::MatrixXd constraint_jacobian;  // rows ((i (S + 1) + k) N + j)
};

Linearization linearize(const ProblemDefinition& problem, const ControlTrajectory& current,
                        const StateRollout& rollout, const ScenarioSet& scenarios,
                        const RolloutSensitivities& sensitivities);

/// Options that vary per SCP iteration rather than per solve.
struct SubproblemOptions {
  bool risk_rows = true;
  double trust_region_radius = 1e3;
  /// Added to every constraint value (same shape as the tensor); used by the
  /// Gaussian baseline for its quantile backoffs.
  const ConstraintTensor* offsets = nullptr;
};

ConvexSubproblem build_subproblem(const ProblemDefinition& problem, const ScenarioSet& scenarios,
                                  RiskLevel level, const ScpConfig& config,
                                  const ControlTrajectory& current, const StateRollout& rollout,
                                  const RolloutSensitivities& sensitivities,
                                  const SubproblemOptions& options = {});

ConvexSubproblem build_subproblem(const ProblemDefinition& problem, RiskLevel level,
                                  const ScpConfig& config, const ControlTrajectory& current,
                                  const Linearization& lin, const SubproblemOptions& options);

/// Epigraph residuals of the subproblem rows at du = 0 and the given (t, y).
EpigraphResiduals subproblem_epigraph_residuals(const ConvexSubproblem& sub, double t,
                                                std::span<const double> y);

QpSolution solve_subproblem(const ConvexSubproblem& sub, double tol, int max_iterations = 100);

enum class SolveStatus { kConverged, kMaxIterations, kSubproblemFailure };

std::string_view to_string(SolveStatus status);

struct IterationRecord {
  int iteration = 0;  // 1-based
  bool risk_rows = false;
  double objective = 0.0;
  /// max(max_i slack_i, positive part of the aggregate row / (M alpha)) at
  /// the accepted (u, t, y).
  double max_epigraph_slack = 0.0;
  double in_sample_avar = 0.0;
  double terminal_violation = 0.0;  // beyond delta_M, infinity norm
  double trust_region_radius = 0.0;
  double control_change = 0.0;
  QpStatus qp_status = QpStatus::kOptimal;
  int qp_iterations = 0;
  double wall_time_s = 0.0;
};

struct SolveReport {
  std::string method = "saa";
  SolveStatus status = SolveStatus::kMaxIterations;
  bool converged = false;
  double alpha = 0.0;
  int iterations = 0;
  std::vector<IterationRecord> history;
  ControlTrajectory controls;
  StateRollout rollout;
  std::vector<std::string> warnings;

  bool failed() const { return status == SolveStatus::kSubproblemFailure; }

  /// Iteration table and final controls. Wall-clock times are excluded so the
  /// document is reproducible; see `timing_json`.
  nlohmann::json to_json() const;
  nlohmann::json timing_json() const;
};

/// Adds constraint offsets for the coming iteration (0-based). Called with the
/// current iterate's rollout and raw constraint evaluations.
using OffsetHook = std::function<ConstraintTensor(int iteration, const ControlTrajectory& current,
                                                  const StateRollout& rollout,
                                                  const ConstraintSet& constraints)>;

/// SCP on the sampled problem with the epigraph form of the AV@R constraint.
SolveReport solve_socp(const ProblemDefinition& problem, const ScenarioSet& scenarios,
                       RiskLevel level, const ScpConfig& config,
                       const ControlTrajectory& initial_guess);

/// Same loop with per-iteration constraint offsets.
SolveReport solve_socp_with_offsets(const ProblemDefinition& problem, const ScenarioSet& scenarios,
                                    RiskLevel level, const ScpConfig& config,
                                    const ControlTrajectory& initial_guess, const OffsetHook& hook);

}  // namespace riskscp
