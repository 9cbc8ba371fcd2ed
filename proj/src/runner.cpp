#include "riskscp/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "riskscp/csv.hpp"
#include "riskscp/errors.hpp"

namespace riskscp {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::vector<std::string>>& known_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"run", {"scenario", "method", "methods", "alphas", "samples", "output_dir"}},
      {"scenario", {"nodes", "horizon", "padding", "separation"}},
      {"solver",
       {"max_iterations", "convergence_tol", "trust_region_weight", "trust_region_radius",
        "adaptive_trust_region", "risk_constraint_warmup", "delta_M", "epsilon_margin",
        "subproblem_tol", "subproblem_max_iterations", "slack_penalty"}},
      {"seeds", {"optimization", "validation"}},
      {"validation", {"n_val"}},
      {"baseline", {"allocation", "parameter_uncertainty"}},
  };
  return keys;
}

// "section.key" -> line number, from a light scan of the raw text.
std::map<std::string, int> key_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream in(text);
  std::string line, section;
  for (int n = 1; std::getline(in, line); ++n) {
    boost::trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = boost::trim_copy(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq != std::string::npos) lines[section + "." + boost::trim_copy(line.substr(0, eq))] = n;
  }
  return lines;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::map<std::string, int> lines, std::string source)
      : tree_(tree), lines_(std::move(lines)), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    const auto it = lines_.find(field);
    const std::string where = it != lines_.end() ? fmt::format("{}:{}: ", source_, it->second)
                                                 : fmt::format("{}: ", source_);
    throw ConfigError(where + field + ": " + msg);
  }

  std::optional<std::string> raw(const std::string& field) const {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(field, '.'));
    if (!v) return std::nullopt;
    return boost::trim_copy(*v);
  }

  template <typename T>
  T parse(const std::string& field, const std::string& text) const {
    try {
      return boost::lexical_cast<T>(text);
    } catch (const boost::bad_lexical_cast&) {
      fail(field, fmt::format("cannot parse '{}'", text));
    }
  }

  template <typename T>
  void get(const std::string& field, T& out) const {
    if (const auto v = raw(field)) out = parse<T>(field, *v);
  }

  template <typename T>
  void get(const std::string& field, std::optional<T>& out) const {
    if (const auto v = raw(field)) out = parse<T>(field, *v);
  }

  void get_bool(const std::string& field, bool& out) const {
    const auto v = raw(field);
    if (!v) return;
    const std::string s = boost::to_lower_copy(*v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") {
      out = true;
    } else if (s == "false" || s == "0" || s == "no" || s == "off") {
      out = false;
    } else {
      fail(field, fmt::format("expected a boolean, got '{}'", *v));
    }
  }

  std::vector<std::string> list(const std::string& field) const {
    std::vector<std::string> items;
    const auto v = raw(field);
    if (!v) return items;
    boost::split(items, *v, boost::is_any_of(","));
    for (auto& s : items) boost::trim(s);
    items.erase(std::remove(items.begin(), items.end(), std::string()), items.end());
    return items;
  }

  void check_unknown() const {
    const auto& keys = known_keys();
    for (const auto& [section, body] : tree_) {
      const auto sec = keys.find(section);
      if (sec == keys.end()) {
        if (body.empty()) fail(section, "keys must be inside a section");
        fail(section, "unknown section");
      }
      for (const auto& [key, value] : body) {
        (void)value;
        if (std::find(sec->second.begin(), sec->second.end(), key) == sec->second.end()) {
          fail(section + "." + key, "unknown key");
        }
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::map<std::string, int> lines_;
  std::string source_;
};

std::string format_number(double v) { return fmt::format("{}", v); }

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg);
  };
  if (scenario != "drone" && scenario != "driving") {
    fail("run.scenario", fmt::format("unknown scenario '{}' (drone | driving)", scenario));
  }
  if (methods.empty()) fail("run.methods", "at least one method is required");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto& m = methods[i];
    if (m != kMethodSaa && m != kMethodDeterministic && m != kMethodGaussianBoole) {
      fail("run.methods", fmt::format("unknown method '{}' (saa | deterministic | gaussian_boole)", m));
    }
    if (std::find(methods.begin(), methods.begin() + i, m) != methods.begin() + i) {
      fail("run.methods", fmt::format("method '{}' listed twice", m));
    }
  }
  if (alphas.empty()) fail("run.alphas", "at least one risk level is required");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) fail("run.alphas", fmt::format("{} is outside (0, 1)", a));
  }
  if (samples < 1) fail("run.samples", "must be >= 1");
  if (output_dir.empty()) fail("run.output_dir", "must not be empty");
  if (nodes && *nodes < 1) fail("scenario.nodes", "must be >= 1");
  if (horizon && !(*horizon > 0.0)) fail("scenario.horizon", "must be positive");
  if (padding && !(*padding >= 0.0)) fail("scenario.padding", "must be >= 0");
  if (separation && !(*separation > 0.0)) fail("scenario.separation", "must be positive");
  if (padding && scenario != "drone") fail("scenario.padding", "only applies to the drone scenario");
  if (separation && scenario != "driving") {
    fail("scenario.separation", "only applies to the driving scenario");
  }
  if (n_val < 1) fail("validation.n_val", "must be >= 1");
  solver.validate();
  make_scenario(*this);
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  pt::ptree tree;
  try {
    std::istringstream s(text);
    pt::read_ini(s, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }
  const Reader r(tree, key_lines(text), source);
  r.check_unknown();

  RunConfig c;
  r.get("run.scenario", c.scenario);
  if (r.raw("run.method") && r.raw("run.methods")) r.fail("run.method", "give either method or methods");
  if (r.raw("run.method")) c.methods = r.list("run.method");
  if (r.raw("run.methods")) c.methods = r.list("run.methods");
  if (r.raw("run.alphas")) {
    c.alphas.clear();
    for (const auto& a : r.list("run.alphas")) c.alphas.push_back(r.parse<double>("run.alphas", a));
  }
  r.get("run.samples", c.samples);
  if (const auto dir = r.raw("run.output_dir")) c.output_dir = *dir;

  r.get("scenario.nodes", c.nodes);
  r.get("scenario.horizon", c.horizon);
  r.get("scenario.padding", c.padding);
  r.get("scenario.separation", c.separation);

  ScpConfig& s = c.solver;
  r.get("solver.max_iterations", s.max_iterations);
  r.get("solver.convergence_tol", s.convergence_tol);
  r.get("solver.trust_region_weight", s.trust_region_weight);
  r.get("solver.trust_region_radius", s.trust_region_radius);
  r.get_bool("solver.adaptive_trust_region", s.adaptive_trust_region);
  r.get("solver.risk_constraint_warmup", s.risk_constraint_warmup);
  r.get("solver.delta_M", s.delta_M);
  r.get("solver.epsilon_margin", s.epsilon_margin);
  r.get("solver.subproblem_tol", s.subproblem_tol);
  r.get("solver.subproblem_max_iterations", s.subproblem_max_iterations);
  r.get("solver.slack_penalty", s.slack_penalty);

  r.get("seeds.optimization", c.optimization_seed);
  r.get("seeds.validation", c.validation_seed);
  r.get("validation.n_val", c.n_val);

  if (const auto mode = r.raw("baseline.allocation")) {
    if (*mode == "uniform") {
      c.baseline.allocation = AllocationMode::kUniform;
    } else if (*mode == "iterative") {
      c.baseline.allocation = AllocationMode::kIterative;
    } else {
      r.fail("baseline.allocation", fmt::format("expected uniform or iterative, got '{}'", *mode));
    }
  }
  r.get_bool("baseline.parameter_uncertainty", c.baseline.parameter_uncertainty);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  return parse_run_config(in, path.string());
}

ScenarioBundle make_scenario(const RunConfig& config) {
  if (config.scenario == "drone") {
    DroneScenarioConfig d = default_drone_config();
    if (config.nodes) d.nodes = *config.nodes;
    if (config.horizon) d.horizon = *config.horizon;
    if (config.padding) d.obstacles.padding = *config.padding;
    return build_drone_problem(d);
  }
  if (config.scenario == "driving") {
    DrivingScenarioConfig d = default_driving_config();
    if (config.nodes) d.nodes = *config.nodes;
    if (config.horizon) d.horizon = *config.horizon;
    if (config.separation) d.separation = *config.separation;
    return build_driving_problem(d);
  }
  throw ConfigError(fmt::format("run.scenario: unknown scenario '{}'", config.scenario));
}

std::string CellResult::directory_name() const {
  return fmt::format("{}_alpha{}", method, alpha);
}

CellResult run_cell(const ScenarioBundle& bundle, const RunConfig& config, const std::string& method,
                    double alpha) {
  const ProblemDefinition& p = bundle.problem;
  const RiskLevel level(alpha);
  const ControlTrajectory guess = ControlTrajectory::zeros(p);
  CellResult cell;
  cell.method = method;
  cell.alpha = alpha;
  try {
    if (method == kMethodSaa) {
      const ScenarioSet set =
          sample_scenarios({config.optimization_seed, kOptimizationStream}, config.samples,
                           p.nodes * p.substeps, {p.state_dim, p.param_dim}, p.dt() / p.substeps,
                           bundle.distribution);
      cell.report = solve_socp(p, set, level, config.solver, guess);
    } else if (method == kMethodDeterministic) {
      cell.report = solve_deterministic(p, bundle.distribution, level, config.solver, guess);
    } else if (method == kMethodGaussianBoole) {
      cell.report = solve_gaussian_boole(p, bundle.distribution, level, config.solver, guess,
                                         config.baseline);
    } else {
      throw ConfigError("unknown method " + method);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
    cell.report.method = method;
    cell.report.alpha = alpha;
    cell.report.status = SolveStatus::kSubproblemFailure;
    return cell;
  }
  if (cell.report.failed()) {
    cell.failed = true;
    cell.error = cell.report.warnings.empty() ? "subproblem failure" : cell.report.warnings.back();
  }
  cell.validation = monte_carlo_validate(p, bundle.distribution, cell.report.controls,
                                         {config.validation_seed, kValidationStream}, config.n_val,
                                         level);
  return cell;
}

void write_cell_artifacts(const std::filesystem::path& dir, const ProblemDefinition& problem,
                          const CellResult& cell) {
  std::filesystem::create_directories(dir);
  nlohmann::json report = cell.report.to_json();
  if (cell.failed) report["error"] = cell.error;
  write_json(dir / "report.json", report);
  if (cell.report.controls.controls.size() == 0) return;  // the solve threw; nothing else to write
  {
    std::ofstream out(dir / "controls.csv");
    write_controls_csv(out, cell.report.controls, problem.dt());
  }
  {
    std::ofstream out(dir / "rollout.csv");
    write_rollout_csv(out, cell.report.rollout);
  }
  write_json(dir / "validation.json", cell.validation.to_json());
  std::ofstream out(dir / "histogram.csv");
  write_histogram_csv(out, cell.validation);
}

void write_summary_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "method,alpha,status,converged,iterations,violation_rate_pct,violation_se_pct,"
         "empirical_var,empirical_avar,mean_cost\n";
  for (const CellResult& c : cells) {
    const bool validated = c.report.controls.controls.size() > 0;
    out << c.method << ',' << format_number(c.alpha) << ',' << to_string(c.report.status) << ','
        << (c.report.converged ? "true" : "false") << ',' << c.report.iterations;
    if (validated) {
      const ValidationReport& v = c.validation;
      for (double x : {100.0 * v.violation_rate, 100.0 * v.violation_standard_error, v.empirical_var,
                       v.empirical_avar, v.mean_cost}) {
        out << ',' << format_number(x);
      }
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
}

int run_sweep(const RunConfig& config, const SweepOptions& options, std::ostream& log) {
  using Clock = std::chrono::steady_clock;
  const ScenarioBundle bundle = make_scenario(config);
  struct Job {
    std::string method;
    double alpha;
  };
  std::vector<Job> jobs;
  for (const auto& m : config.methods)
    for (double a : config.alphas) jobs.push_back({m, a});

  std::vector<CellResult> cells(jobs.size());
  std::vector<double> seconds(jobs.size());
  auto run_one = [&](std::size_t i) {
    const auto start = Clock::now();
    cells[i] = run_cell(bundle, config, jobs[i].method, jobs[i].alpha);
    seconds[i] = std::chrono::duration<double>(Clock::now() - start).count();
  };
  auto report = [&](std::size_t i) {
    const CellResult& c = cells[i];
    if (options.verbosity >= 2) {
      for (const IterationRecord& r : c.report.history) {
        log << fmt::format("  iter {:2d} obj {:.6g} slack {:.3e} change {:.3e} qp {}\n", r.iteration,
                           r.objective, r.max_epigraph_slack, r.control_change, to_string(r.qp_status));
      }
    }
    if (options.verbosity >= 1) {
      if (c.report.controls.controls.size() == 0) {
        log << fmt::format("{} alpha={}: FAILED ({})\n", c.method, c.alpha, c.error);
      } else {
        log << fmt::format("{} alpha={}: {} in {} it, violation {:.2f}%, AV@R {:.4g}, cost {:.4g} ({:.1f} s)\n",
                           c.method, c.alpha, to_string(c.report.status), c.report.iterations,
                           100.0 * c.validation.violation_rate, c.validation.empirical_avar,
                           c.validation.mean_cost, seconds[i]);
      }
    }
  };

  if (options.parallel) {
    std::vector<std::future<void>> futures;
    for (std::size_t i = 0; i < jobs.size(); ++i) futures.push_back(std::async(std::launch::async, run_one, i));
    for (auto& f : futures) f.get();
    for (std::size_t i = 0; i < jobs.size(); ++i) report(i);
  } else {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      run_one(i);
      report(i);
    }
  }

  std::filesystem::create_directories(config.output_dir);
  nlohmann::json timing = nlohmann::json::array();
  bool any_failed = false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    write_cell_artifacts(config.output_dir / cells[i].directory_name(), bundle.problem, cells[i]);
    nlohmann::json t = cells[i].report.timing_json();
    t["cell_s"] = seconds[i];
    timing.push_back(std::move(t));
    any_failed = any_failed || cells[i].failed;
  }
  {
    std::ofstream out(config.output_dir / "summary.csv");
    write_summary_csv(out, cells);
  }
  write_json(config.output_dir / "timing.json", {{"cells", std::move(timing)}});
  return any_failed ? 2 : 0;
}

}  // namespace riskscp
