#include "riskscp/sampling.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <ostream>
#include <string>

#include "riskscp/csv.hpp"
#include "riskscp/errors.hpp"
#include "riskscp/normal.hpp"

namespace riskscp {
namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Cholesky that tolerates zero-variance directions: a non-positive pivot
// (within tolerance) zeroes its column instead of failing.
Eigen::MatrixXd semidefinite_factor(const Eigen::MatrixXd& cov) {
  const Eigen::Index n = cov.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale;
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = cov(j, j) - L.row(j).head(j).squaredNorm();
    if (pivot < -tol) throw ConfigError("Gaussian covariance is not positive semidefinite");
    if (pivot <= tol) continue;
    L(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      L(i, j) = (cov(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }
  }
  // Reject matrices whose zero-pivot columns still carry off-diagonal mass.
  if ((L * L.transpose() - cov).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw ConfigError("Gaussian covariance is not positive semidefinite");
  }
  return L;
}

std::uint32_t checked_index(int value, const char* what) {
  if (value < 0) throw ConfigError(std::string(what) + " must be non-negative");
  return static_cast<std::uint32_t>(value);
}

}  // namespace

VectorDistribution VectorDistribution::fixed(Eigen::VectorXd value) {
  if (!all_finite(value)) throw ConfigError("fixed distribution value must be finite");
  VectorDistribution d;
  d.family_ = Family::kFixed;
  d.lower_ = value;
  d.upper_ = value;
  d.center_ = std::move(value);
  return d;
}

VectorDistribution VectorDistribution::uniform(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() != upper.size()) throw ConfigError("uniform bounds differ in dimension");
  if (!all_finite(lower) || !all_finite(upper)) throw ConfigError("uniform bounds must be finite");
  if ((lower.array() > upper.array()).any()) {
    throw ConfigError("uniform support is empty (lower > upper)");
  }
  VectorDistribution d;
  d.family_ = Family::kUniform;
  d.center_ = 0.5 * (lower + upper);
  d.lower_ = std::move(lower);
  d.upper_ = std::move(upper);
  return d;
}

VectorDistribution VectorDistribution::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw ConfigError("Gaussian covariance must be n x n with n = mean dimension");
  }
  if (!all_finite(mean) || !all_finite(covariance)) throw ConfigError("Gaussian parameters must be finite");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ConfigError("Gaussian covariance must be symmetric");
  }
  VectorDistribution d;
  d.family_ = Family::kGaussian;
  d.factor_ = semidefinite_factor(covariance);
  d.center_ = std::move(mean);
  return d;
}

Eigen::MatrixXd VectorDistribution::covariance() const {
  switch (family_) {
    case Family::kFixed:
      return Eigen::MatrixXd::Zero(dim(), dim());
    case Family::kUniform:
      return ((upper_ - lower_).array().square() / 12.0).matrix().asDiagonal();
    case Family::kGaussian:
      return factor_ * factor_.transpose();
  }
  return {};
}

Eigen::VectorXd VectorDistribution::transform(const Eigen::VectorXd& unit_draws) const {
  switch (family_) {
    case Family::kFixed:
      return center_;
    case Family::kUniform:
      return lower_.array() + unit_draws.array() * (upper_ - lower_).array();
    case Family::kGaussian: {
      Eigen::VectorXd z(dim());
      for (int c = 0; c < dim(); ++c) z(c) = normal_quantile(unit_draws(c));
      return center_ + factor_ * z;
    }
  }
  return {};
}

ScenarioSet sample_scenarios(RandomSeed seed, int count, int steps, ScenarioDims dims, double dt,
                             const ScenarioDistribution& distribution) {
  if (count < 1) throw ConfigError("scenario count must be at least 1");
  if (steps < 1) throw ConfigError("step count must be at least 1");
  if (static_cast<std::uint32_t>(steps) > CounterRng::kMaxStep) throw ConfigError("too many steps");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
  if (dims.state_dim < 1 || dims.param_dim < 0) throw ConfigError("invalid scenario dimensions");
  if (distribution.initial_state.dim() != dims.state_dim) {
    throw ConfigError("initial-state distribution has dimension " +
                      std::to_string(distribution.initial_state.dim()) + ", expected " +
                      std::to_string(dims.state_dim));
  }
  if (distribution.parameters.dim() != dims.param_dim) {
    throw ConfigError("parameter distribution has dimension " +
                      std::to_string(distribution.parameters.dim()) + ", expected " +
                      std::to_string(dims.param_dim));
  }

  const CounterRng rng(seed);
  const double sqrt_dt = std::sqrt(dt);
  const int n = dims.state_dim;
  const int q = dims.param_dim;

  ScenarioSet set;
  set.count = count;
  set.steps = steps;
  set.dt = dt;
  set.seed = seed;
  set.initial_states.resize(count);
  set.parameters.resize(count);
  set.increments.resize(count);

  for (int i = 0; i < count; ++i) {
    const auto scenario = checked_index(i, "scenario index");
    Eigen::VectorXd draws(n);
    for (int c = 0; c < n; ++c) draws(c) = rng.uniform(DrawSource::kInitialState, scenario, 0, c);
    set.initial_states[i] = distribution.initial_state.transform(draws);

    draws.resize(q);
    for (int c = 0; c < q; ++c) draws(c) = rng.uniform(DrawSource::kParameters, scenario, 0, c);
    set.parameters[i] = distribution.parameters.transform(draws);

    Eigen::MatrixXd dw(steps, n);
    for (int k = 0; k < steps; ++k) {
      for (int c = 0; c < n; ++c) {
        dw(k, c) = sqrt_dt * rng.normal(DrawSource::kBrownian, scenario,
                                        static_cast<std::uint32_t>(k), c);
      }
    }
    set.increments[i] = std::move(dw);
  }
  return set;
}

ScenarioSet nominal_scenario(const Eigen::VectorXd& initial_state,
                             const Eigen::VectorXd& parameters, int steps, double dt) {
  if (steps < 1 || !(dt > 0.0)) throw ConfigError("nominal scenario needs steps >= 1 and dt > 0");
  ScenarioSet set;
  set.count = 1;
  set.steps = steps;
  set.dt = dt;
  set.initial_states = {initial_state};
  set.parameters = {parameters};
  set.increments = {Eigen::MatrixXd::Zero(steps, initial_state.size())};
  return set;
}

RandomField::RandomField(double mean_level, std::vector<Term> terms)
    : mean_level_(mean_level), terms_(std::move(terms)) {}

double RandomField::operator()(double position) const {
  double value = mean_level_;
  for (const Term& t : terms_) value += t.amplitude * std::cos(t.frequency * position + t.phase);
  return value;
}

double RandomField::derivative(double position) const {
  double value = 0.0;
  for (const Term& t : terms_) {
    value -= t.amplitude * t.frequency * std::sin(t.frequency * position + t.phase);
  }
  return value;
}

Eigen::VectorXd RandomField::coefficients() const {
  Eigen::VectorXd c(3 * terms_.size());
  for (std::size_t n = 0; n < terms_.size(); ++n) {
    c(3 * n) = terms_[n].amplitude;
    c(3 * n + 1) = terms_[n].frequency;
    c(3 * n + 2) = terms_[n].phase;
  }
  return c;
}

RandomField sample_rff_field(RandomSeed seed, const RandomFieldSpec& spec,
                             std::uint32_t realization) {
  if (spec.term_count < 1) throw ConfigError("random field needs at least one term");
  for (const Interval* r : {&spec.amplitude_range, &spec.frequency_range, &spec.phase_range}) {
    if (!(r->lower <= r->upper) || !std::isfinite(r->lower) || !std::isfinite(r->upper)) {
      throw ConfigError("random field coefficient range is empty");
    }
  }
  const CounterRng rng(seed);
  auto draw = [&](const Interval& range, int n, int slot) {
    const double u = rng.uniform(DrawSource::kRandomField, realization, 0,
                                 static_cast<std::uint32_t>(3 * n + slot));
    return range.lower + u * (range.upper - range.lower);
  };
  std::vector<RandomField::Term> terms(spec.term_count);
  for (int n = 0; n < spec.term_count; ++n) {
    terms[n] = {draw(spec.amplitude_range, n, 0), draw(spec.frequency_range, n, 1),
                draw(spec.phase_range, n, 2)};
  }
  return RandomField(spec.mean_level, std::move(terms));
}

void write_increments_csv(std::ostream& out, const ScenarioSet& set) {
  csv::header(out, "scenario_id,step", "dW_", set.state_dim());
  for (int i = 0; i < set.count; ++i) {
    for (int k = 0; k < set.steps; ++k) {
      out << i << ',' << k;
      csv::values(out, set.increments[i].row(k));
      out << '\n';
    }
  }
}

void write_initial_states_csv(std::ostream& out, const ScenarioSet& set) {
  csv::header(out, "scenario_id", "x0_", set.state_dim());
  for (int i = 0; i < set.count; ++i) {
    out << i;
    csv::values(out, set.initial_states[i]);
    out << '\n';
  }
}

void write_parameters_csv(std::ostream& out, const ScenarioSet& set) {
  csv::header(out, "scenario_id", "xi_", set.param_dim());
  for (int i = 0; i < set.count; ++i) {
    out << i;
    csv::values(out, set.parameters[i]);
    out << '\n';
  }
}

}  // namespace riskscp
