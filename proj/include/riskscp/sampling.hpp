#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "riskscp/random.hpp"

namespace riskscp {

/// Distribution of a random vector. `Uniform` is a product of independent
/// uniforms on [lower_i, upper_i]; a component with lower_i == upper_i is
/// deterministic. `Gaussian` takes a positive semidefinite covariance, so
/// known components may carry zero variance.
class VectorDistribution {
 public:
  enum class Family { kFixed, kUniform, kGaussian };

  VectorDistribution() = default;

  static VectorDistribution fixed(Eigen::VectorXd value);
  static VectorDistribution uniform(Eigen::VectorXd lower, Eigen::VectorXd upper);
  static VectorDistribution gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  Family family() const noexcept { return family_; }
  int dim() const noexcept { return static_cast<int>(center_.size()); }

  /// Expected value (midpoint for uniforms).
  const Eigen::VectorXd& mean() const noexcept { return center_; }
  Eigen::MatrixXd covariance() const;

  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }

  /// Maps `dim()` independent U(0,1) draws to one sample.
  Eigen::VectorXd transform(const Eigen::VectorXd& unit_draws) const;

 private:
  Family family_ = Family::kFixed;
  Eigen::VectorXd center_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  Eigen::MatrixXd factor_;  // L with L L^T = covariance
};

/// Where the epistemic quantities of a scenario come from. Brownian increments
/// are always standard (variance dt per coordinate).
struct ScenarioDistribution {
  VectorDistribution initial_state;
  VectorDistribution parameters;
};

struct ScenarioDims {
  int state_dim = 0;
  int param_dim = 0;
};

/// M sampled realizations of (x0, xi, Brownian increments). Immutable after
/// construction by `sample_scenarios`.
struct ScenarioSet {
  int count = 0;
  int steps = 0;
  double dt = 0.0;
  RandomSeed seed;
  std::vector<Eigen::VectorXd> initial_states;  // count x n
  std::vector<Eigen::VectorXd> parameters;      // count x q
  std::vector<Eigen::MatrixXd> increments;      // count x (steps x n)

  int state_dim() const { return initial_states.empty() ? 0 : static_cast<int>(initial_states[0].size()); }
  int param_dim() const { return parameters.empty() ? 0 : static_cast<int>(parameters[0].size()); }
};

ScenarioSet sample_scenarios(RandomSeed seed, int count, int steps, ScenarioDims dims, double dt,
                             const ScenarioDistribution& distribution);

/// A single deterministic scenario: given x0 and xi, zero Brownian increments.
ScenarioSet nominal_scenario(const Eigen::VectorXd& initial_state,
                             const Eigen::VectorXd& parameters, int steps, double dt);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Random Fourier feature field: mean_level + sum_n a_n cos(f_n p + phi_n),
/// with (a_n, f_n, phi_n) uniform on the given ranges.
struct RandomFieldSpec {
  double mean_level = 0.0;
  int term_count = 30;
  Interval amplitude_range;
  Interval frequency_range;
  Interval phase_range;
};

class RandomField {
 public:
  struct Term {
    double amplitude;
    double frequency;
    double phase;
  };

  RandomField(double mean_level, std::vector<Term> terms);

  double operator()(double position) const;
  double derivative(double position) const;

  double mean_level() const noexcept { return mean_level_; }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  /// (a_1, f_1, phi_1, a_2, ...).
  Eigen::VectorXd coefficients() const;

 private:
  double mean_level_;
  std::vector<Term> terms_;
};

RandomField sample_rff_field(RandomSeed seed, const RandomFieldSpec& spec,
                             std::uint32_t realization = 0);

/// CSV exports: `scenario_id,step,dW_0..` and `scenario_id,<prefix>_0..`.
void write_increments_csv(std::ostream& out, const ScenarioSet& set);
void write_initial_states_csv(std::ostream& out, const ScenarioSet& set);
void write_parameters_csv(std::ostream& out, const ScenarioSet& set);

}  // namespace riskscp
