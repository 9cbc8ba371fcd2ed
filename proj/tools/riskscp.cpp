// Batch front end: riskscp <config.ini> [--output-dir DIR] [--seed N] ...

#include <iostream>

#include <CLI11.hpp>

#include "riskscp/errors.hpp"
#include "riskscp/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Risk-averse trajectory optimization sweeps (SAA + baselines)"};
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed, validation_seed;
  int verbose = 0;
  bool quiet = false;
  bool parallel = false;
  app.add_option("config", config_path, "INI run configuration")->required();
  app.add_option("-o,--output-dir", output_dir, "Override run.output_dir");
  app.add_option("--seed", seed, "Override seeds.optimization");
  app.add_option("--validation-seed", validation_seed, "Override seeds.validation");
  app.add_flag("-v,--verbose", verbose, "Per-iteration output");
  app.add_flag("-q,--quiet", quiet, "Only errors");
  app.add_flag("--parallel", parallel, "Run sweep cells concurrently");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  riskscp::RunConfig config;
  try {
    config = riskscp::load_run_config(config_path);
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (seed) config.optimization_seed = *seed;
    if (validation_seed) config.validation_seed = *validation_seed;
    config.validate();
  } catch (const riskscp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  riskscp::SweepOptions options;
  options.parallel = parallel;
  options.verbosity = quiet ? 0 : 1 + verbose;
  try {
    const int status = riskscp::run_sweep(config, options, std::cerr);
    if (status != 0) std::cerr << "one or more cells failed; see report.json files\n";
    return status;
  } catch (const riskscp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
