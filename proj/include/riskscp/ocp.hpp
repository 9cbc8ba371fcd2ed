#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "riskscp/risk.hpp"
#include "riskscp/sampling.hpp"

namespace riskscp {

// Callback outputs. An empty (size-0) derivative matrix stands for zero.

struct DriftEval {
  Eigen::VectorXd value;  // n
  Eigen::MatrixXd dx;     // n x n
  Eigen::MatrixXd du;     // n x m
};

struct DiffusionEval {
  Eigen::MatrixXd value;            // n x n, column c multiplies dW_c
  std::vector<Eigen::MatrixXd> dx;  // per column c: d sigma(:, c) / dx, n x n
  std::vector<Eigen::MatrixXd> du;  // per column c: d sigma(:, c) / du, n x m
};

/// Stage cost value, gradient, and a positive semidefinite (Gauss-Newton)
/// Hessian model in (x, u).
struct StageCostEval {
  double value = 0.0;
  Eigen::VectorXd gx, gu;
  Eigen::MatrixXd hxx, hxu, huu;
};

struct TerminalCostEval {
  double value = 0.0;
  Eigen::VectorXd gx;
  Eigen::MatrixXd hxx;
};

/// Vector-valued constraint with its state Jacobian (rows = components).
struct ConstraintEval {
  Eigen::VectorXd value;
  Eigen::MatrixXd dx;
  Eigen::MatrixXd dxi;  // optional d value / d xi; only the Gaussian baseline reads it
};

/// Discretized stochastic optimal control problem: dynamics, costs,
/// inequality constraints G_j(x, xi) <= 0 (enforced in AV@R), and a terminal
/// equality H(x) = 0 (enforced on the sample mean).
struct ProblemDefinition {
  std::string name;
  int state_dim = 0;
  int control_dim = 0;
  int param_dim = 0;
  double horizon = 1.0;
  int nodes = 1;     // S control intervals, S + 1 state nodes
  int substeps = 1;  // Euler steps per control interval
  Eigen::VectorXd control_lower;
  Eigen::VectorXd control_upper;

  std::function<DriftEval(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& xi)>
      drift;
  std::function<DiffusionEval(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& xi)>
      diffusion;
  std::function<StageCostEval(const Eigen::VectorXd& x, const Eigen::VectorXd& u)> running_cost;
  std::function<TerminalCostEval(const Eigen::VectorXd& x)> terminal_cost;  // optional

  int constraint_count = 0;
  std::function<ConstraintEval(const Eigen::VectorXd& x, const Eigen::VectorXd& xi)> constraints;
  int equality_count = 0;
  std::function<ConstraintEval(const Eigen::VectorXd& x)> terminal_equality;

  /// Skip node 0 in the risk constraint (control-independent when x0 is random).
  bool exclude_initial_node = false;

  double dt() const { return horizon / nodes; }
  int decision_dim() const { return nodes * control_dim; }
  int first_constraint_node() const { return exclude_initial_node ? 1 : 0; }

  /// Throws ConfigError on inconsistent dimensions, bounds, or missing callbacks.
  void validate() const;
};

/// S x m piecewise-constant controls plus the AV@R auxiliary variable t.
struct ControlTrajectory {
  Eigen::MatrixXd controls;
  double risk_t = 0.0;

  static ControlTrajectory zeros(const ProblemDefinition& problem);

  /// Row-major flattening (u_0, u_1, ...), the layout of every control gradient.
  Eigen::VectorXd flat() const;
  static ControlTrajectory from_flat(const Eigen::VectorXd& flat, int nodes, int control_dim,
                                     double risk_t = 0.0);
  bool within_bounds(const ProblemDefinition& problem, double tol = 0.0) const;
};

/// Sample state paths on the control grid: states[i] is (S + 1) x n.
struct StateRollout {
  std::vector<Eigen::MatrixXd> states;
  RandomSeed scenario_ref;

  int scenarios() const { return static_cast<int>(states.size()); }
};

/// jacobians[i][k] = d x^i_k / d(u_0, ..., u_{S-1}), n x (S m).
struct RolloutSensitivities {
  std::vector<std::vector<Eigen::MatrixXd>> jacobians;
};

StateRollout rollout(const ProblemDefinition& problem, const ControlTrajectory& controls,
                     const ScenarioSet& scenarios);

/// Path of a single scenario, (S + 1) x n.
Eigen::MatrixXd rollout_scenario(const ProblemDefinition& problem,
                                 const ControlTrajectory& controls, const ScenarioSet& scenarios,
                                 int scenario);

RolloutSensitivities rollout_sensitivities(const ProblemDefinition& problem,
                                           const ControlTrajectory& controls,
                                           const ScenarioSet& scenarios,
                                           const StateRollout& rollout);

struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd gradient;  // S m
  Eigen::MatrixXd hessian;   // Gauss-Newton model, S m x S m (empty unless requested)
};

ObjectiveEval evaluate_objective(const ProblemDefinition& problem,
                                 const ControlTrajectory& controls, const StateRollout& rollout,
                                 const RolloutSensitivities& sensitivities,
                                 bool with_hessian = false);

/// Discretized cost of one sampled path.
double path_cost(const ProblemDefinition& problem, const ControlTrajectory& controls,
                 const Eigen::MatrixXd& path);

struct ConstraintSet {
  ConstraintTensor values;
  /// state_gradients[i] row (k * N + j) = d G_j(x^i_k, xi^i) / dx.
  std::vector<Eigen::MatrixXd> state_gradients;
  Eigen::VectorXd equality_mean;      // (1/M) sum_i H(x^i_S)
  Eigen::MatrixXd equality_jacobian;  // n_h x S m, d equality_mean / du
};

ConstraintSet evaluate_constraints(const ProblemDefinition& problem,
                                   const ControlTrajectory& controls, const StateRollout& rollout,
                                   const ScenarioSet& scenarios,
                                   const RolloutSensitivities* sensitivities = nullptr);

/// d G_j(x^i_k) / du for every (i, k, j): row ((i * (S + 1) + k) * N + j).
Eigen::MatrixXd constraint_control_jacobian(const ProblemDefinition& problem,
                                            const ConstraintSet& constraints,
                                            const RolloutSensitivities& sensitivities);

void write_rollout_csv(std::ostream& out, const StateRollout& rollout);
void write_controls_csv(std::ostream& out, const ControlTrajectory& controls, double dt);

}  // namespace riskscp
