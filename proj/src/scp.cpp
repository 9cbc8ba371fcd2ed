#include "riskscp/scp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "riskscp/errors.hpp"

namespace riskscp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConstraintTensor with_offsets(const ConstraintTensor& values, const ConstraintTensor* offsets) {
  if (offsets == nullptr) return values;
  if (offsets->scenarios() != values.scenarios() || offsets->nodes() != values.nodes() ||
      offsets->constraints() != values.constraints()) {
    throw UsageError("constraint offsets do not match the constraint tensor");
  }
  ConstraintTensor out = values;
  for (int i = 0; i < values.scenarios(); ++i)
    for (int k = 0; k < values.nodes(); ++k)
      for (int j = 0; j < values.constraints(); ++j) out(i, k, j) += (*offsets)(i, k, j);
  return out;
}

struct Iterate {
  StateRollout rollout;
  RolloutSensitivities sensitivities;
  Linearization lin;
};

Iterate evaluate_iterate(const ProblemDefinition& problem, const ScenarioSet& scenarios,
                         const ControlTrajectory& controls, int iteration) {
  try {
    Iterate it;
    it.rollout = rollout(problem, controls, scenarios);
    it.sensitivities = rollout_sensitivities(problem, controls, scenarios, it.rollout);
    it.lin = linearize(problem, controls, it.rollout, scenarios, it.sensitivities);
    return it;
  } catch (const RolloutDivergence& e) {
    throw e.at_iteration(iteration);
  }
}

double terminal_violation(const Eigen::VectorXd& mean, double delta) {
  if (mean.size() == 0) return 0.0;
  return std::max(0.0, mean.cwiseAbs().maxCoeff() - delta);
}

}  // namespace

void ScpConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("solver." + msg); };
  if (max_iterations < 1) fail("max_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) fail("convergence_tol must be positive");
  if (!(subproblem_tol > 0.0)) fail("subproblem_tol must be positive");
  if (subproblem_max_iterations < 1) fail("subproblem_max_iterations must be >= 1");
  if (risk_constraint_warmup < 0 || risk_constraint_warmup >= max_iterations) {
    fail("risk_constraint_warmup must lie in [0, max_iterations)");
  }
  if (!(trust_region_weight >= 0.0) || !std::isfinite(trust_region_weight)) {
    fail("trust_region_weight must be non-negative");
  }
  if (!(trust_region_radius > 0.0)) fail("trust_region_radius must be positive");
  if (!(delta_M >= 0.0) || !std::isfinite(delta_M)) fail("delta_M must be non-negative");
  if (!(epsilon_margin >= 0.0) || !std::isfinite(epsilon_margin)) fail("epsilon_margin must be non-negative");
  if (!(slack_penalty > 0.0) || !std::isfinite(slack_penalty)) fail("slack_penalty must be positive");
}

double delta_schedule(double C, int sample_count, double epsilon) {
  if (!(C > 0.0) || sample_count < 1 || !(epsilon > 0.0 && epsilon < 0.5)) {
    throw ConfigError("delta schedule needs C > 0, M >= 1 and epsilon in (0, 1/2)");
  }
  return C * std::pow(static_cast<double>(sample_count), epsilon - 0.5);
}

Linearization linearize(const ProblemDefinition& problem, const ControlTrajectory& current,
                        const StateRollout& rollout, const ScenarioSet& scenarios,
                        const RolloutSensitivities& sensitivities) {
  Linearization lin;
  lin.scenarios = rollout.scenarios();
  lin.objective = evaluate_objective(problem, current, rollout, sensitivities, true);
  lin.constraints = evaluate_constraints(problem, current, rollout, scenarios, &sensitivities);
  if (problem.constraint_count > 0) {
    lin.constraint_jacobian = constraint_control_jacobian(problem, lin.constraints, sensitivities);
  }
  return lin;
}

ConvexSubproblem build_subproblem(const ProblemDefinition& problem, const ScenarioSet& scenarios,
                                  RiskLevel level, const ScpConfig& config,
                                  const ControlTrajectory& current, const StateRollout& rollout,
                                  const RolloutSensitivities& sensitivities,
                                  const SubproblemOptions& options) {
  if (rollout.scenarios() != scenarios.count ||
      static_cast<int>(sensitivities.jacobians.size()) != scenarios.count) {
    throw UsageError("build_subproblem: rollout, sensitivities and scenarios disagree");
  }
  const Linearization lin = linearize(problem, current, rollout, scenarios, sensitivities);
  return build_subproblem(problem, level, config, current, lin, options);
}

ConvexSubproblem build_subproblem(const ProblemDefinition& problem, RiskLevel level,
                                  const ScpConfig& config, const ControlTrajectory& current,
                                  const Linearization& lin, const SubproblemOptions& options) {
  const int m = problem.control_dim;
  const int S = problem.nodes;
  const int N = problem.constraint_count;
  const int nh = problem.equality_count;
  const int nu = problem.decision_dim();
  if (current.controls.rows() != S || current.controls.cols() != m) {
    throw UsageError("build_subproblem: control trajectory must be S x m");
  }
  if (lin.objective.gradient.size() != nu || lin.objective.hessian.rows() != nu) {
    throw UsageError("build_subproblem: objective model has the wrong dimension");
  }
  if (lin.constraints.equality_mean.size() != nh) {
    throw UsageError("build_subproblem: terminal equality has the wrong dimension");
  }
  const int M = lin.scenarios;
  if (M < 1) throw UsageError("build_subproblem: no scenarios");
  if (N > 0 && (lin.constraints.values.scenarios() != M || lin.constraints.values.constraints() != N || lin.constraints.values.nodes() != S + 1 ||
                lin.constraint_jacobian.rows() != static_cast<Eigen::Index>(M) * (S + 1) * N)) {
    throw UsageError("build_subproblem: constraint linearization has the wrong dimension");
  }
  const ConstraintTensor values =
      N > 0 ? with_offsets(lin.constraints.values, options.offsets) : ConstraintTensor();
  const double alpha = level.alpha();
  const double m_alpha = M * alpha;
  const bool risk_rows = options.risk_rows && N > 0;

  ConvexSubproblem sub;
  sub.layout = {nu, M, nh};
  sub.risk_rows = risk_rows;
  sub.first_node = problem.first_constraint_node();
  sub.nodes = S + 1;
  sub.constraints = N;
  sub.alpha = alpha;
  const SubproblemLayout& L = sub.layout;
  const int nv = L.size();

  QuadraticProgram& qp = sub.qp;
  qp.P = Eigen::MatrixXd::Zero(nv, nv);
  qp.P.topLeftCorner(nu, nu) = 0.5 * (lin.objective.hessian + lin.objective.hessian.transpose());
  qp.P.topLeftCorner(nu, nu).diagonal().array() += 2.0 * config.trust_region_weight;
  qp.q = Eigen::VectorXd::Zero(nv);
  qp.q.head(nu) = lin.objective.gradient;
  for (int h = 0; h < nh; ++h) {
    qp.q(L.slack_upper(h)) = config.slack_penalty;
    qp.q(L.slack_lower(h)) = config.slack_penalty;
  }
  qp.q(L.slack_aggregate()) = config.slack_penalty / m_alpha;

  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> lower, upper;
  int row = 0;

  // Terminal interval on the linearized sample-mean equality.
  for (int h = 0; h < nh; ++h, ++row) {
    for (int c = 0; c < nu; ++c) {
      const double v = lin.constraints.equality_jacobian(h, c);
      if (v != 0.0) triplets.emplace_back(row, c, v);
    }
    triplets.emplace_back(row, L.slack_lower(h), 1.0);
    triplets.emplace_back(row, L.slack_upper(h), -1.0);
    const double mean = lin.constraints.equality_mean(h);
    lower.push_back(-config.delta_M - mean);
    upper.push_back(config.delta_M - mean);
  }

  if (risk_rows) {
    sub.epigraph_row_begin = row;
    for (int i = 0; i < M; ++i) {
      for (int k = sub.first_node; k <= S; ++k) {
        for (int j = 0; j < N; ++j, ++row) {
          const Eigen::Index src = (static_cast<Eigen::Index>(i) * (S + 1) + k) * N + j;
          // Only u_0 .. u_{k-1} influence node k.
          for (int c = 0; c < std::min(k * m, nu); ++c) {
            const double v = lin.constraint_jacobian(src, c);
            if (v != 0.0) triplets.emplace_back(row, c, v);
          }
          triplets.emplace_back(row, L.t(), -1.0);
          triplets.emplace_back(row, L.y(i), -1.0);
          lower.push_back(-kInf);
          upper.push_back(-values(i, k, j));
        }
      }
    }
    sub.epigraph_row_count = row - sub.epigraph_row_begin;
    sub.aggregate_row = row;
    triplets.emplace_back(row, L.t(), m_alpha);
    for (int i = 0; i < M; ++i) triplets.emplace_back(row, L.y(i), 1.0);
    triplets.emplace_back(row, L.slack_aggregate(), -1.0);
    lower.push_back(-kInf);
    upper.push_back(-m_alpha * config.epsilon_margin);
    ++row;
  }

  qp.A.resize(row, nv);
  qp.A.setFromTriplets(triplets.begin(), triplets.end());
  qp.lower = Eigen::Map<Eigen::VectorXd>(lower.data(), row);
  qp.upper = Eigen::Map<Eigen::VectorXd>(upper.data(), row);

  qp.var_lower = Eigen::VectorXd::Zero(nv);
  qp.var_upper = Eigen::VectorXd::Constant(nv, kInf);
  const Eigen::VectorXd u = current.flat();
  const double r = options.trust_region_radius;
  for (int c = 0; c < nu; ++c) {
    const int comp = c % m;
    const double hi = std::min(problem.control_upper(comp) - u(c), r);
    const double lo = std::min(std::max(problem.control_lower(comp) - u(c), -r), hi);
    qp.var_lower(c) = lo;
    qp.var_upper(c) = hi;
  }
  if (risk_rows) {
    qp.var_lower(L.t()) = -kInf;
  } else {
    // Epigraph variables are inert: pin them at the current values.
    qp.var_lower(L.t()) = qp.var_upper(L.t()) = current.risk_t;
    for (int i = 0; i < M; ++i) {
      const double y = N > 0 ? std::max(0.0, values.scenario_max(i) - current.risk_t) : 0.0;
      qp.var_lower(L.y(i)) = qp.var_upper(L.y(i)) = y;
    }
    qp.var_upper(L.slack_aggregate()) = 0.0;
  }
  return sub;
}

EpigraphResiduals subproblem_epigraph_residuals(const ConvexSubproblem& sub, double t,
                                                std::span<const double> y) {
  const SubproblemLayout& L = sub.layout;
  if (!sub.risk_rows) throw UsageError("subproblem has no epigraph rows");
  if (static_cast<int>(y.size()) != L.scenarios) throw UsageError("y has the wrong dimension");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(L.size());
  x(L.t()) = t;
  for (int i = 0; i < L.scenarios; ++i) x(L.y(i)) = y[i];
  const Eigen::VectorXd ax = sub.qp.A * x;

  EpigraphResiduals r;
  r.per_scenario_slack = Eigen::VectorXd::Zero(L.scenarios);
  for (int i = 0; i < L.scenarios; ++i) {
    double slack = std::max(0.0, -y[i]);
    for (int k = sub.first_node; k < sub.nodes; ++k) {
      for (int j = 0; j < sub.constraints; ++j) {
        const int row = sub.epigraph_row(i, k, j);
        slack = std::max(slack, ax(row) - sub.qp.upper(row));
      }
    }
    r.per_scenario_slack(i) = slack;
    r.pointwise_max_violation = std::max(r.pointwise_max_violation, slack);
  }
  r.aggregate = ax(sub.aggregate_row);
  return r;
}

QpSolution solve_subproblem(const ConvexSubproblem& sub, double tol, int max_iterations) {
  return solve_qp(sub.qp, {tol, max_iterations});
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kSubproblemFailure: return "subproblem_failure";
  }
  return "unknown";
}

nlohmann::json SolveReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["status"] = std::string(to_string(status));
  j["converged"] = converged;
  j["alpha"] = alpha;
  j["iterations"] = iterations;
  nlohmann::json table = nlohmann::json::array();
  for (const IterationRecord& r : history) {
    table.push_back({{"iteration", r.iteration},
                     {"risk_rows", r.risk_rows},
                     {"objective", r.objective},
                     {"max_epigraph_slack", r.max_epigraph_slack},
                     {"in_sample_avar", r.in_sample_avar},
                     {"terminal_violation", r.terminal_violation},
                     {"trust_region_radius", r.trust_region_radius},
                     {"control_change", r.control_change},
                     {"qp_status", std::string(to_string(r.qp_status))},
                     {"qp_iterations", r.qp_iterations}});
  }
  j["history"] = std::move(table);
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index s = 0; s < controls.controls.rows(); ++s) {
    rows.push_back(std::vector<double>(controls.controls.row(s).begin(), controls.controls.row(s).end()));
  }
  j["final"] = {{"risk_t", controls.risk_t}, {"controls", std::move(rows)}};
  j["warnings"] = warnings;
  return j;
}

nlohmann::json SolveReport::timing_json() const {
  std::vector<double> times;
  double total = 0.0;
  for (const IterationRecord& r : history) {
    times.push_back(r.wall_time_s);
    total += r.wall_time_s;
  }
  return {{"method", method}, {"alpha", alpha}, {"iteration_wall_time_s", times}, {"total_s", total}};
}

SolveReport solve_socp(const ProblemDefinition& problem, const ScenarioSet& scenarios,
                       RiskLevel level, const ScpConfig& config,
                       const ControlTrajectory& initial_guess) {
  return solve_socp_with_offsets(problem, scenarios, level, config, initial_guess, nullptr);
}

SolveReport solve_socp_with_offsets(const ProblemDefinition& problem, const ScenarioSet& scenarios,
                                    RiskLevel level, const ScpConfig& config,
                                    const ControlTrajectory& initial_guess, const OffsetHook& hook) {
  problem.validate();
  config.validate();
  if (initial_guess.controls.rows() != problem.nodes ||
      initial_guess.controls.cols() != problem.control_dim) {
    throw UsageError("initial guess must be S x m");
  }
  if (!initial_guess.within_bounds(problem)) throw UsageError("initial guess violates the control box");

  using Clock = std::chrono::steady_clock;
  const int N = problem.constraint_count;
  const int m = problem.control_dim;
  const double alpha = level.alpha();

  SolveReport report;
  report.alpha = alpha;
  ControlTrajectory u = initial_guess;
  Iterate cur = evaluate_iterate(problem, scenarios, u, 0);
  const int M = scenarios.count;
  const double m_alpha = M * alpha;

  ConstraintTensor offsets;
  bool have_offsets = false;
  auto refresh_offsets = [&](int iteration) {
    if (!hook || N == 0) return;
    offsets = hook(iteration, u, cur.rollout, cur.lin.constraints);
    have_offsets = true;
  };
  refresh_offsets(0);
  if (N > 0) {
    const ConstraintTensor eff = with_offsets(cur.lin.constraints.values, have_offsets ? &offsets : nullptr);
    u.risk_t = empirical_var(eff.scenario_maxima(), level);
  }

  double radius = config.trust_region_radius;
  double prev_slack = kInf;
  double prev_merit = kInf;
  double change = kInf;
  for (int it = 0; it < config.max_iterations; ++it) {
    const auto start = Clock::now();
    if (it > 0) refresh_offsets(it);
    const bool risk_rows = N > 0 && it >= config.risk_constraint_warmup;
    SubproblemOptions options{risk_rows, radius, have_offsets ? &offsets : nullptr};
    const ConvexSubproblem sub = build_subproblem(problem, level, config, u, cur.lin, options);
    const QpSolution sol = solve_subproblem(sub, config.subproblem_tol, config.subproblem_max_iterations);

    IterationRecord rec;
    rec.iteration = it + 1;
    rec.risk_rows = risk_rows;
    rec.trust_region_radius = radius;
    rec.qp_status = sol.status;
    rec.qp_iterations = sol.iterations;

    const bool usable = (sol.status == QpStatus::kOptimal || sol.status == QpStatus::kMaxIterations) &&
                        sol.x.allFinite();
    if (!usable) {
      rec.objective = cur.lin.objective.value;
      rec.control_change = 0.0;
      rec.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
      report.history.push_back(rec);
      report.status = SolveStatus::kSubproblemFailure;
      report.warnings.push_back(fmt::format("iteration {}: subproblem {}", it + 1, to_string(sol.status)));
      break;
    }
    if (sol.status == QpStatus::kMaxIterations) {
      report.warnings.push_back(fmt::format("iteration {}: subproblem hit its iteration limit", it + 1));
    }

    const SubproblemLayout& L = sub.layout;
    Eigen::VectorXd next_flat = u.flat() + sol.x.head(L.controls);
    for (int c = 0; c < L.controls; ++c) {
      next_flat(c) = std::clamp(next_flat(c), problem.control_lower(c % m), problem.control_upper(c % m));
    }
    const double t_next = risk_rows ? sol.x(L.t()) : u.risk_t;
    ControlTrajectory next = ControlTrajectory::from_flat(next_flat, problem.nodes, m, t_next);
    const double step = (next_flat - u.flat()).norm();
    const double scale = next_flat.norm();
    change = scale > 1e-8 ? step / scale : step;

    Iterate nxt = evaluate_iterate(problem, scenarios, next, it + 1);
    rec.objective = nxt.lin.objective.value;
    rec.control_change = change;
    rec.terminal_violation = terminal_violation(nxt.lin.constraints.equality_mean, config.delta_M);
    rec.in_sample_avar = std::numeric_limits<double>::quiet_NaN();
    double avar_excess = 0.0;
    if (N > 0) {
      const ConstraintTensor eff =
          with_offsets(nxt.lin.constraints.values, have_offsets ? &offsets : nullptr);
      std::vector<double> y(M);
      for (int i = 0; i < M; ++i) y[i] = sol.x(L.y(i));
      const EpigraphResiduals res = epigraph_residuals(eff, t_next, y, level);
      const double agg = std::max(0.0, res.aggregate + m_alpha * config.epsilon_margin) / m_alpha;
      rec.max_epigraph_slack = std::max(res.pointwise_max_violation, agg);
      rec.in_sample_avar = empirical_avar(eff.scenario_maxima(), level).value;
      avar_excess = std::max(0.0, rec.in_sample_avar + config.epsilon_margin);
    }

    if (config.adaptive_trust_region) {
      const double merit = rec.objective +
                           config.slack_penalty * (rec.terminal_violation + (risk_rows ? avar_excess : 0.0));
      if (merit > prev_merit) {
        radius *= 0.5;
      } else {
        radius = std::min(2.0 * radius, config.trust_region_radius);
      }
      prev_merit = merit;
    }
    if (risk_rows) {
      if (rec.max_epigraph_slack > prev_slack + 1e-9) {
        report.warnings.push_back(fmt::format("iteration {}: max epigraph slack increased from {:.3e} to {:.3e}",
                                              it + 1, prev_slack, rec.max_epigraph_slack));
      }
      prev_slack = rec.max_epigraph_slack;
    }

    u = std::move(next);
    cur = std::move(nxt);
    rec.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
    report.history.push_back(rec);
    if (change <= config.convergence_tol && (risk_rows || N == 0)) {
      report.status = SolveStatus::kConverged;
      break;
    }
  }

  report.iterations = static_cast<int>(report.history.size());
  report.converged = report.status == SolveStatus::kConverged;
  report.controls = std::move(u);
  report.rollout = std::move(cur.rollout);
  return report;
}

}  // namespace riskscp
