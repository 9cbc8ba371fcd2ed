#include "riskscp/ocp.hpp"

#include <cmath>
#include <ostream>

#include "riskscp/csv.hpp"
#include "riskscp/errors.hpp"

namespace riskscp {
namespace {

void check_scenarios(const ProblemDefinition& problem, const ScenarioSet& scenarios) {
  const int fine_steps = problem.nodes * problem.substeps;
  if (scenarios.steps != fine_steps) {
    throw UsageError("scenario set has " + std::to_string(scenarios.steps) +
                     " steps, problem needs " + std::to_string(fine_steps));
  }
  const double h = problem.dt() / problem.substeps;
  if (std::abs(scenarios.dt - h) > 1e-12 * h) {
    throw UsageError("scenario time step does not match the problem discretization");
  }
  if (scenarios.count < 1 || scenarios.state_dim() != problem.state_dim ||
      scenarios.param_dim() != problem.param_dim) {
    throw UsageError("scenario dimensions do not match the problem");
  }
}

void check_controls(const ProblemDefinition& problem, const ControlTrajectory& controls) {
  if (controls.controls.rows() != problem.nodes || controls.controls.cols() != problem.control_dim) {
    throw UsageError("control trajectory must be S x m");
  }
}

}  // namespace

void ProblemDefinition::validate() const {
  if (state_dim < 1 || control_dim < 1 || param_dim < 0) throw ConfigError(name + ": invalid dimensions");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError(name + ": horizon must be positive");
  if (nodes < 1 || substeps < 1) throw ConfigError(name + ": node and substep counts must be >= 1");
  if (control_lower.size() != control_dim || control_upper.size() != control_dim) {
    throw ConfigError(name + ": control bounds must have dimension m");
  }
  if ((control_lower.array() > control_upper.array()).any()) {
    throw ConfigError(name + ": control box is empty");
  }
  if (!control_lower.allFinite() || !control_upper.allFinite()) {
    throw ConfigError(name + ": control box must be bounded");
  }
  if (!drift || !diffusion || !running_cost) {
    throw ConfigError(name + ": drift, diffusion and running cost are required");
  }
  if (constraint_count < 0 || (constraint_count > 0 && !constraints)) {
    throw ConfigError(name + ": missing constraint callback");
  }
  if (equality_count < 0 || (equality_count > 0 && !terminal_equality)) {
    throw ConfigError(name + ": missing terminal equality callback");
  }
  if (exclude_initial_node && nodes < 1) throw ConfigError(name + ": no nodes left to constrain");
}

ControlTrajectory ControlTrajectory::zeros(const ProblemDefinition& problem) {
  return {Eigen::MatrixXd::Zero(problem.nodes, problem.control_dim), 0.0};
}

Eigen::VectorXd ControlTrajectory::flat() const {
  Eigen::VectorXd v(controls.size());
  const Eigen::Index m = controls.cols();
  for (Eigen::Index s = 0; s < controls.rows(); ++s) v.segment(s * m, m) = controls.row(s).transpose();
  return v;
}

ControlTrajectory ControlTrajectory::from_flat(const Eigen::VectorXd& flat, int nodes,
                                               int control_dim, double risk_t) {
  if (flat.size() != static_cast<Eigen::Index>(nodes) * control_dim) {
    throw UsageError("flat control vector has the wrong size");
  }
  ControlTrajectory c{Eigen::MatrixXd(nodes, control_dim), risk_t};
  for (int s = 0; s < nodes; ++s) c.controls.row(s) = flat.segment(s * control_dim, control_dim).transpose();
  return c;
}

bool ControlTrajectory::within_bounds(const ProblemDefinition& problem, double tol) const {
  for (Eigen::Index s = 0; s < controls.rows(); ++s) {
    if ((controls.row(s).transpose().array() < problem.control_lower.array() - tol).any() ||
        (controls.row(s).transpose().array() > problem.control_upper.array() + tol).any()) {
      return false;
    }
  }
  return true;
}

Eigen::MatrixXd rollout_scenario(const ProblemDefinition& problem,
                                 const ControlTrajectory& controls, const ScenarioSet& scenarios,
                                 int i) {
  const int n = problem.state_dim;
  const double h = problem.dt() / problem.substeps;
  const Eigen::VectorXd& xi = scenarios.parameters[i];
  const Eigen::MatrixXd& dw = scenarios.increments[i];

  Eigen::MatrixXd path(problem.nodes + 1, n);
  Eigen::VectorXd x = scenarios.initial_states[i];
  path.row(0) = x.transpose();
  for (int s = 0; s < problem.nodes; ++s) {
    const Eigen::VectorXd u = controls.controls.row(s).transpose();
    for (int r = 0; r < problem.substeps; ++r) {
      const int f = s * problem.substeps + r;
      const DriftEval b = problem.drift(x, u, xi);
      const DiffusionEval sigma = problem.diffusion(x, u, xi);
      x += b.value * h + sigma.value * dw.row(f).transpose();
      if (!x.allFinite()) throw RolloutDivergence(i, f);
    }
    path.row(s + 1) = x.transpose();
  }
  return path;
}

StateRollout rollout(const ProblemDefinition& problem, const ControlTrajectory& controls,
                     const ScenarioSet& scenarios) {
  check_scenarios(problem, scenarios);
  check_controls(problem, controls);
  StateRollout out;
  out.scenario_ref = scenarios.seed;
  out.states.resize(scenarios.count);
  for (int i = 0; i < scenarios.count; ++i) out.states[i] = rollout_scenario(problem, controls, scenarios, i);
  return out;
}

RolloutSensitivities rollout_sensitivities(const ProblemDefinition& problem,
                                           const ControlTrajectory& controls,
                                           const ScenarioSet& scenarios,
                                           const StateRollout& rollout) {
  check_scenarios(problem, scenarios);
  check_controls(problem, controls);
  if (rollout.scenarios() != scenarios.count) throw UsageError("rollout does not match scenarios");

  const int n = problem.state_dim;
  const int m = problem.control_dim;
  const int S = problem.nodes;
  const double h = problem.dt() / problem.substeps;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);

  RolloutSensitivities out;
  out.jacobians.resize(scenarios.count);
  for (int i = 0; i < scenarios.count; ++i) {
    const Eigen::VectorXd& xi = scenarios.parameters[i];
    const Eigen::MatrixXd& dw = scenarios.increments[i];
    auto& jac = out.jacobians[i];
    jac.assign(S + 1, Eigen::MatrixXd::Zero(n, S * m));

    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, S * m);
    Eigen::VectorXd x = scenarios.initial_states[i];
    for (int s = 0; s < S; ++s) {
      const Eigen::VectorXd u = controls.controls.row(s).transpose();
      const int live = (s + 1) * m;  // columns of u_0..u_s; later ones stay zero
      for (int r = 0; r < problem.substeps; ++r) {
        const int f = s * problem.substeps + r;
        const DriftEval b = problem.drift(x, u, xi);
        const DiffusionEval sigma = problem.diffusion(x, u, xi);

        Eigen::MatrixXd A = eye;
        if (b.dx.size() > 0) A += b.dx * h;
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, m);
        if (b.du.size() > 0) B += b.du * h;
        for (std::size_t c = 0; c < sigma.dx.size(); ++c) {
          if (sigma.dx[c].size() > 0) A += sigma.dx[c] * dw(f, c);
        }
        for (std::size_t c = 0; c < sigma.du.size(); ++c) {
          if (sigma.du[c].size() > 0) B += sigma.du[c] * dw(f, c);
        }

        J.leftCols(live) = A * J.leftCols(live);
        J.middleCols(s * m, m) += B;
        x += b.value * h + sigma.value * dw.row(f).transpose();
        if (!x.allFinite() || !J.allFinite()) throw RolloutDivergence(i, f);
      }
      jac[s + 1] = J;
    }
  }
  return out;
}

double path_cost(const ProblemDefinition& problem, const ControlTrajectory& controls,
                 const Eigen::MatrixXd& path) {
  const double dt = problem.dt();
  double cost = 0.0;
  for (int k = 0; k < problem.nodes; ++k) {
    cost += problem.running_cost(path.row(k).transpose(), controls.controls.row(k).transpose()).value * dt;
  }
  if (problem.terminal_cost) cost += problem.terminal_cost(path.row(problem.nodes).transpose()).value;
  return cost;
}

ObjectiveEval evaluate_objective(const ProblemDefinition& problem,
                                 const ControlTrajectory& controls, const StateRollout& rollout,
                                 const RolloutSensitivities& sensitivities, bool with_hessian) {
  check_controls(problem, controls);
  const int m = problem.control_dim;
  const int S = problem.nodes;
  const int dim = S * m;
  const int count = rollout.scenarios();
  if (count < 1 || static_cast<int>(sensitivities.jacobians.size()) != count) {
    throw UsageError("evaluate_objective: rollout and sensitivities disagree");
  }
  const double dt = problem.dt();
  const double w = 1.0 / count;

  ObjectiveEval out;
  out.gradient = Eigen::VectorXd::Zero(dim);
  if (with_hessian) out.hessian = Eigen::MatrixXd::Zero(dim, dim);

  for (int i = 0; i < count; ++i) {
    const Eigen::MatrixXd& path = rollout.states[i];
    const auto& jac = sensitivities.jacobians[i];
    for (int k = 0; k < S; ++k) {
      const StageCostEval c =
          problem.running_cost(path.row(k).transpose(), controls.controls.row(k).transpose());
      out.value += w * dt * c.value;
      const double scale = w * dt;
      if (c.gx.size() > 0) out.gradient.noalias() += scale * jac[k].transpose() * c.gx;
      if (c.gu.size() > 0) out.gradient.segment(k * m, m) += scale * c.gu;
      if (!with_hessian) continue;
      if (c.hxx.size() > 0) out.hessian.noalias() += scale * jac[k].transpose() * c.hxx * jac[k];
      if (c.hxu.size() > 0) {
        const Eigen::MatrixXd cross = scale * jac[k].transpose() * c.hxu;  // dim x m
        out.hessian.middleCols(k * m, m) += cross;
        out.hessian.middleRows(k * m, m) += cross.transpose();
      }
      if (c.huu.size() > 0) out.hessian.block(k * m, k * m, m, m) += scale * c.huu;
    }
    if (problem.terminal_cost) {
      const TerminalCostEval c = problem.terminal_cost(path.row(S).transpose());
      out.value += w * c.value;
      if (c.gx.size() > 0) out.gradient.noalias() += w * jac[S].transpose() * c.gx;
      if (with_hessian && c.hxx.size() > 0) {
        out.hessian.noalias() += w * jac[S].transpose() * c.hxx * jac[S];
      }
    }
  }
  return out;
}

ConstraintSet evaluate_constraints(const ProblemDefinition& problem,
                                   const ControlTrajectory& controls, const StateRollout& rollout,
                                   const ScenarioSet& scenarios,
                                   const RolloutSensitivities* sensitivities) {
  check_controls(problem, controls);
  const int count = rollout.scenarios();
  if (count != scenarios.count) throw UsageError("evaluate_constraints: rollout/scenario mismatch");
  const int S = problem.nodes;
  const int N = problem.constraint_count;
  const int n = problem.state_dim;

  ConstraintSet out;
  if (N > 0) {
    out.values = ConstraintTensor(count, S + 1, N, problem.first_constraint_node());
    out.state_gradients.assign(count, Eigen::MatrixXd::Zero((S + 1) * N, n));
    for (int i = 0; i < count; ++i) {
      for (int k = 0; k <= S; ++k) {
        const ConstraintEval g =
            problem.constraints(rollout.states[i].row(k).transpose(), scenarios.parameters[i]);
        if (g.value.size() != N || g.dx.rows() != N || g.dx.cols() != n) {
          throw UsageError("constraint callback returned wrong dimensions");
        }
        for (int j = 0; j < N; ++j) out.values(i, k, j) = g.value(j);
        out.state_gradients[i].middleRows(k * N, N) = g.dx;
      }
    }
  }

  const int nh = problem.equality_count;
  out.equality_mean = Eigen::VectorXd::Zero(nh);
  out.equality_jacobian = Eigen::MatrixXd::Zero(nh, problem.decision_dim());
  if (nh > 0) {
    for (int i = 0; i < count; ++i) {
      const ConstraintEval hv = problem.terminal_equality(rollout.states[i].row(S).transpose());
      if (hv.value.size() != nh || hv.dx.rows() != nh || hv.dx.cols() != n) {
        throw UsageError("terminal equality callback returned wrong dimensions");
      }
      out.equality_mean += hv.value / count;
      if (sensitivities != nullptr) {
        out.equality_jacobian.noalias() += hv.dx * sensitivities->jacobians[i][S] / count;
      }
    }
  }
  return out;
}

Eigen::MatrixXd constraint_control_jacobian(const ProblemDefinition& problem,
                                            const ConstraintSet& constraints,
                                            const RolloutSensitivities& sensitivities) {
  const int count = constraints.values.scenarios();
  const int S = problem.nodes;
  const int N = problem.constraint_count;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count) * (S + 1) * N, problem.decision_dim());
  for (int i = 0; i < count; ++i) {
    for (int k = 0; k <= S; ++k) {
      const Eigen::Index row = (static_cast<Eigen::Index>(i) * (S + 1) + k) * N;
      out.middleRows(row, N).noalias() =
          constraints.state_gradients[i].middleRows(k * N, N) * sensitivities.jacobians[i][k];
    }
  }
  return out;
}

void write_rollout_csv(std::ostream& out, const StateRollout& rollout) {
  const int n = rollout.states.empty() ? 0 : static_cast<int>(rollout.states[0].cols());
  csv::header(out, "scenario_id,step", "x_", n);
  for (int i = 0; i < rollout.scenarios(); ++i) {
    for (Eigen::Index k = 0; k < rollout.states[i].rows(); ++k) {
      out << i << ',' << k;
      csv::values(out, rollout.states[i].row(k));
      out << '\n';
    }
  }
}

void write_controls_csv(std::ostream& out, const ControlTrajectory& controls, double dt) {
  csv::header(out, "step,time_s", "u_", static_cast<int>(controls.controls.cols()));
  for (Eigen::Index s = 0; s < controls.controls.rows(); ++s) {
    out << s << ',';
    csv::put(out, static_cast<double>(s) * dt);
    csv::values(out, controls.controls.row(s));
    out << '\n';
  }
}

}  // namespace riskscp
