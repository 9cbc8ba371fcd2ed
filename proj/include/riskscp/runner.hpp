#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "riskscp/baselines.hpp"
#include "riskscp/evaluation.hpp"
#include "riskscp/scenarios.hpp"
#include "riskscp/scp.hpp"

namespace riskscp {

inline constexpr const char* kMethodSaa = "saa";
inline constexpr const char* kMethodDeterministic = "deterministic";
inline constexpr const char* kMethodGaussianBoole = "gaussian_boole";

/// One sweep: scenario x methods x risk levels.
struct RunConfig {
  std::string scenario = "drone";
  std::vector<std::string> methods{kMethodSaa};
  std::vector<double> alphas{0.1};
  int samples = 50;                    // M
  std::optional<int> nodes;            // S; scenario default when unset
  std::optional<double> horizon;       // T
  std::optional<double> padding;       // drone obstacle padding
  std::optional<double> separation;    // driving d_sep
  std::uint64_t optimization_seed = 1;
  std::uint64_t validation_seed = 1;
  int n_val = kDefaultValidationSamples;
  ScpConfig solver;
  GaussianBooleOptions baseline;
  std::filesystem::path output_dir = "out";

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses an INI file. Sections: [run], [scenario], [solver], [seeds],
/// [validation], [baseline]. Unknown keys and malformed values throw
/// ConfigError with the file line where available. Does not call validate().
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");

ScenarioBundle make_scenario(const RunConfig& config);

struct CellResult {
  std::string method;
  double alpha = 0.0;
  SolveReport report;
  ValidationReport validation;
  bool failed = false;
  std::string error;  // set when the solve threw or reported a subproblem failure

  /// `<method>_alpha<alpha>`.
  std::string directory_name() const;
};

/// Samples the optimization scenarios, solves with `method`, and validates.
/// Never throws for solver-side failures; they are recorded in the result.
CellResult run_cell(const ScenarioBundle& bundle, const RunConfig& config, const std::string& method,
                    double alpha);

/// controls.csv, rollout.csv, report.json, validation.json, histogram.csv.
void write_cell_artifacts(const std::filesystem::path& dir, const ProblemDefinition& problem,
                          const CellResult& cell);

/// method,alpha,status,converged,iterations,violation_rate_pct,violation_se_pct,empirical_var,
/// empirical_avar,mean_cost
void write_summary_csv(std::ostream& out, const std::vector<CellResult>& cells);

struct SweepOptions {
  bool parallel = false;
  int verbosity = 1;  // 0 quiet, 1 per cell, 2 per iteration
};

/// Runs every cell and writes all artifacts under config.output_dir.
/// Returns 0, or 2 if any cell failed.
int run_sweep(const RunConfig& config, const SweepOptions& options, std::ostream& log);

}  // namespace riskscp
