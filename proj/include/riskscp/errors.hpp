#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace riskscp {

/// Invalid user-facing configuration (scenario defaults, sampler specs, run files).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Caller violated an operation precondition (empty sample, mismatched dimensions).
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// A state became non-finite during an Euler-Maruyama rollout.
class RolloutDivergence : public std::runtime_error {
 public:
  RolloutDivergence(std::size_t scenario, std::size_t step, int iteration = -1)
      : std::runtime_error(format(scenario, step, iteration)),
        scenario_(scenario),
        step_(step),
        iteration_(iteration) {}

  std::size_t scenario() const noexcept { return scenario_; }
  std::size_t step() const noexcept { return step_; }
  /// SCP iteration that produced the diverging controls, or -1 outside a solve.
  int iteration() const noexcept { return iteration_; }

  RolloutDivergence at_iteration(int iteration) const {
    return RolloutDivergence(scenario_, step_, iteration);
  }

 private:
  static std::string format(std::size_t scenario, std::size_t step, int iteration) {
    std::string msg = "rollout diverged in scenario " + std::to_string(scenario) +
                      " at step " + std::to_string(step);
    if (iteration >= 0) msg += " (SCP iteration " + std::to_string(iteration) + ")";
    return msg;
  }

  std::size_t scenario_;
  std::size_t step_;
  int iteration_;
};

}  // namespace riskscp
