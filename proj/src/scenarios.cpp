#include "riskscp/scenarios.hpp"

#include <cmath>

#include "riskscp/errors.hpp"

namespace riskscp {
namespace {

bool symmetric_positive_definite(const Eigen::MatrixXd& R) {
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + R.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  return llt.info() == Eigen::Success;
}

StageCostEval effort_cost(const Eigen::MatrixXd& R, int n, const Eigen::VectorXd& u) {
  StageCostEval c;
  c.value = u.dot(R * u);
  c.gx = Eigen::VectorXd::Zero(n);
  c.gu = 2.0 * R * u;
  c.huu = 2.0 * R;
  return c;
}

}  // namespace

EllipsoidTerm ellipsoid_constraint(const Eigen::Vector3d& p, const Eigen::Vector3d& center,
                                   const Eigen::Vector3d& axes, double padding) {
  const Eigen::Vector3d a = axes.array() + padding;
  const Eigen::Vector3d q = a.array().square().inverse();
  const Eigen::Vector3d d = p - center;
  EllipsoidTerm t;
  t.value = 1.0 - d.dot(q.cwiseProduct(d));
  t.dp = -2.0 * q.cwiseProduct(d);
  t.d_center = -t.dp;
  t.d_axes = 2.0 * d.array().square() / a.array().cube();
  return t;
}

SphereTerm sphere_constraint(const Eigen::Vector3d& p, const Eigen::Vector3d& center, double radius,
                             double padding) {
  const Eigen::Vector3d d = p - center;
  const double r = d.norm();
  SphereTerm t;
  t.value = radius + padding - r;
  t.dp = r > 0.0 ? Eigen::Vector3d(-d / r) : Eigen::Vector3d::Zero();
  t.d_center = -t.dp;
  t.d_radius = 1.0;
  return t;
}

Eigen::VectorXd ObstacleSet::param_lower() const {
  Eigen::VectorXd v(param_dim());
  int o = 0;
  for (const auto& e : ellipsoids) {
    v.segment<3>(o) = e.center_lower;
    v.segment<3>(o + 3) = e.axes_lower;
    o += 6;
  }
  for (const auto& s : spheres) {
    v.segment<3>(o) = s.center_lower;
    v(o + 3) = s.radius_lower;
    o += 4;
  }
  return v;
}

Eigen::VectorXd ObstacleSet::param_upper() const {
  Eigen::VectorXd v(param_dim());
  int o = 0;
  for (const auto& e : ellipsoids) {
    v.segment<3>(o) = e.center_upper;
    v.segment<3>(o + 3) = e.axes_upper;
    o += 6;
  }
  for (const auto& s : spheres) {
    v.segment<3>(o) = s.center_upper;
    v(o + 3) = s.radius_upper;
    o += 4;
  }
  return v;
}

void ObstacleSet::evaluate(const Eigen::Vector3d& p, const Eigen::VectorXd& params,
                           Eigen::VectorXd& value, Eigen::MatrixXd& dp,
                           Eigen::MatrixXd& dparams) const {
  const int n = count();
  value.resize(n);
  dp.setZero(n, 3);
  dparams.setZero(n, param_dim());
  int o = 0;
  int j = 0;
  for (std::size_t e = 0; e < ellipsoids.size(); ++e, ++j, o += 6) {
    const auto t = ellipsoid_constraint(p, params.segment<3>(o), params.segment<3>(o + 3), padding);
    value(j) = t.value;
    dp.row(j) = t.dp.transpose();
    dparams.block<1, 3>(j, o) = t.d_center.transpose();
    dparams.block<1, 3>(j, o + 3) = t.d_axes.transpose();
  }
  for (std::size_t s = 0; s < spheres.size(); ++s, ++j, o += 4) {
    const auto t = sphere_constraint(p, params.segment<3>(o), params(o + 3), padding);
    value(j) = t.value;
    dp.row(j) = t.dp.transpose();
    dparams.block<1, 3>(j, o) = t.d_center.transpose();
    dparams(j, o + 3) = t.d_radius;
  }
}

void ObstacleSet::validate() const {
  if (!(padding >= 0.0)) throw ConfigError("obstacle padding must be >= 0");
  for (const auto& e : ellipsoids) {
    if ((e.center_lower.array() > e.center_upper.array()).any() ||
        (e.axes_lower.array() > e.axes_upper.array()).any()) {
      throw ConfigError("ellipsoid support has lower > upper");
    }
    if (!(e.axes_lower.array() > 0.0).all()) {
      throw ConfigError("ellipsoid semi-axes must be strictly positive");
    }
  }
  for (const auto& s : spheres) {
    if ((s.center_lower.array() > s.center_upper.array()).any() ||
        s.radius_lower > s.radius_upper) {
      throw ConfigError("sphere support has lower > upper");
    }
    if (!(s.radius_lower > 0.0)) throw ConfigError("sphere radius must be strictly positive");
  }
}

// ---------------------------------------------------------------- drone

void DroneScenarioConfig::validate() const {
  if (!(mass.lower > 0.0) || mass.lower > mass.upper) {
    throw ConfigError("drone mass support must be strictly positive with lower <= upper");
  }
  if (!(drag >= 0.0) || !(diffusion >= 0.0)) {
    throw ConfigError("drone drag and diffusion must be >= 0");
  }
  if (!symmetric_positive_definite(effort_weight)) {
    throw ConfigError("drone effort weight R must be symmetric positive definite");
  }
  if (!(horizon > 0.0) || nodes < 1 || substeps < 1) {
    throw ConfigError("drone horizon, nodes and substeps must be positive");
  }
  if (!(control_limit > 0.0)) throw ConfigError("drone control limit must be positive");
  if (!feedback_gain.allFinite()) throw ConfigError("drone feedback gain must be finite");
  obstacles.validate();
}

DroneScenarioConfig default_drone_config() {
  DroneScenarioConfig c;
  c.mass = {1.0, 1.25};
  c.drag = 0.1;
  c.diffusion = 0.05;
  c.feedback_gain.rightCols<3>() = -0.5 * Eigen::Matrix3d::Identity();
  c.initial_state.setZero();
  c.goal << 6.0, 0.0, 0.0, 0.0, 0.0, 0.0;
  c.effort_weight = Eigen::Matrix3d::Identity();
  c.horizon = 6.0;
  c.nodes = 20;
  c.control_limit = 10.0;
  // Three tall columns that each cut 0.2 m into the straight start-goal line.
  const auto column = [](double x) {
    EllipsoidObstacle e;
    const Eigen::Vector3d center(x, 0.5, 0.0);
    const Eigen::Vector3d jitter(0.05, 0.05, 0.0);
    e.center_lower = center - jitter;
    e.center_upper = center + jitter;
    e.axes_lower = Eigen::Vector3d(0.63, 0.63, 2.0);
    e.axes_upper = Eigen::Vector3d(0.77, 0.77, 2.0);
    return e;
  };
  c.obstacles.ellipsoids = {column(1.5), column(3.0), column(4.5)};
  return c;
}

ScenarioBundle build_drone_problem(const DroneScenarioConfig& config) {
  config.validate();
  ScenarioBundle b;
  ProblemDefinition& p = b.problem;
  const ObstacleSet obstacles = config.obstacles;
  p.name = "drone";
  p.state_dim = 6;
  p.control_dim = 3;
  p.param_dim = 1 + obstacles.param_dim();
  p.horizon = config.horizon;
  p.nodes = config.nodes;
  p.substeps = config.substeps;
  p.control_lower = Eigen::VectorXd::Constant(3, -config.control_limit);
  p.control_upper = Eigen::VectorXd::Constant(3, config.control_limit);

  const double drag = config.drag;
  const Eigen::Matrix<double, 3, 6> K = config.feedback_gain;
  p.drift = [drag, K](const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                      const Eigen::VectorXd& xi) {
    const double inv_m = 1.0 / xi(0);
    const Eigen::Vector3d v = x.tail<3>();
    DriftEval b;
    b.value.resize(6);
    b.value.head<3>() = v;
    b.value.tail<3>() = inv_m * (-drag * v.cwiseAbs().cwiseProduct(v) + u + K * x);
    b.dx = Eigen::MatrixXd::Zero(6, 6);
    b.dx.topRightCorner<3, 3>().setIdentity();
    b.dx.bottomRows<3>() = inv_m * K;
    b.dx.bottomRightCorner<3, 3>().diagonal() -= inv_m * 2.0 * drag * v.cwiseAbs();
    b.du = Eigen::MatrixXd::Zero(6, 3);
    b.du.bottomRows<3>().diagonal().setConstant(inv_m);
    return b;
  };
  const double beta_sigma = config.diffusion;
  p.diffusion = [beta_sigma](const Eigen::VectorXd&, const Eigen::VectorXd&,
                             const Eigen::VectorXd& xi) {
    DiffusionEval s;
    s.value = Eigen::MatrixXd::Zero(6, 6);
    s.value.bottomRightCorner<3, 3>().diagonal().setConstant(beta_sigma / xi(0));
    return s;
  };
  const Eigen::MatrixXd R = config.effort_weight;
  p.running_cost = [R](const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return effort_cost(R, 6, u);
  };

  p.constraint_count = obstacles.count();
  p.constraints = [obstacles](const Eigen::VectorXd& x, const Eigen::VectorXd& xi) {
    ConstraintEval g;
    Eigen::MatrixXd dp, dparams;
    obstacles.evaluate(x.head<3>(), xi.tail(xi.size() - 1), g.value, dp, dparams);
    g.dx = Eigen::MatrixXd::Zero(g.value.size(), 6);
    g.dx.leftCols<3>() = dp;
    g.dxi = Eigen::MatrixXd::Zero(g.value.size(), xi.size());
    g.dxi.rightCols(dparams.cols()) = dparams;
    return g;
  };
  const Eigen::VectorXd goal = config.goal;
  p.equality_count = 6;
  p.terminal_equality = [goal](const Eigen::VectorXd& x) {
    return ConstraintEval{x - goal, Eigen::MatrixXd::Identity(6, 6), {}};
  };
  p.exclude_initial_node = false;
  p.validate();

  b.distribution.initial_state = VectorDistribution::fixed(config.initial_state);
  Eigen::VectorXd lower(p.param_dim), upper(p.param_dim);
  lower << config.mass.lower, obstacles.param_lower();
  upper << config.mass.upper, obstacles.param_upper();
  b.distribution.parameters = VectorDistribution::uniform(lower, upper);
  return b;
}

// ---------------------------------------------------------------- driving

void DrivingScenarioConfig::validate() const {
  if (!(separation > 0.0)) throw ConfigError("driving separation d_sep must be > 0");
  if (!(smoothing > 0.0)) throw ConfigError("driving force smoothing must be > 0");
  if ((pedestrian_covariance - pedestrian_covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ConfigError("pedestrian covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(pedestrian_covariance);
  if (eig.eigenvalues().minCoeff() < -1e-12 * (1.0 + pedestrian_covariance.norm())) {
    throw ConfigError("pedestrian covariance must be positive semidefinite");
  }
  if (omega1.lower > omega1.upper || omega2.lower > omega2.upper) {
    throw ConfigError("personality support has lower > upper");
  }
  if (!(sigma >= 0.0) || !(desired_speed >= 0.0)) {
    throw ConfigError("pedestrian sigma and desired speed must be >= 0");
  }
  if (!(direction.norm() > 0.0)) throw ConfigError("pedestrian direction must be nonzero");
  if (!symmetric_positive_definite(effort_weight)) {
    throw ConfigError("driving effort weight R must be symmetric positive definite");
  }
  if (!(horizon > 0.0) || nodes < 1 || substeps < 1) {
    throw ConfigError("driving horizon, nodes and substeps must be positive");
  }
  if (!(control_limit.array() > 0.0).all()) {
    throw ConfigError("driving control limits must be positive");
  }
}

DrivingScenarioConfig default_driving_config() {
  // Pedestrian starts 3 m right of the lane and walks across it slowly; the
  // car must swerve or time its pass. Perception noise is small so the
  // personality (omega) spread dominates.
  DrivingScenarioConfig c;
  c.ego_initial << 0.0, 0.0, 5.0, 0.0;
  c.pedestrian_mean << 15.0, -3.0, 0.0, 0.5;
  c.pedestrian_covariance = Eigen::Vector4d(0.005, 0.005, 0.0005, 0.0005).asDiagonal();
  c.omega1 = {0.9, 1.1};
  c.omega2 = {-0.6, -0.4};
  c.desired_speed = 0.5;
  c.direction = Eigen::Vector2d(0.0, 1.0);
  c.sigma = 0.02;
  c.separation = 2.0;
  c.ego_goal = Eigen::Vector2d(30.0, 0.0);
  c.effort_weight = Eigen::Vector2d(1.0, 10.0).asDiagonal();
  c.horizon = 6.0;
  c.nodes = 20;
  c.control_limit = Eigen::Vector2d(5.0, 1.0);
  return c;
}

PedestrianForce pedestrian_force(const Eigen::Vector2d& ego, const Eigen::Vector2d& ped,
                                 const Eigen::Vector2d& vel, double omega1, double omega2,
                                 const DrivingScenarioConfig& config) {
  const Eigen::Vector2d e = config.direction.normalized();
  const Eigen::Vector2d d = ego - ped;
  const double r = std::sqrt(d.squaredNorm() + config.smoothing * config.smoothing);
  PedestrianForce f;
  f.value = omega1 * (config.desired_speed * e - vel) + omega2 * d / r;
  const Eigen::Matrix2d dg = Eigen::Matrix2d::Identity() / r - d * d.transpose() / (r * r * r);
  f.d_ego = omega2 * dg;
  f.d_ped = -omega2 * dg;
  f.d_vel = -omega1 * Eigen::Matrix2d::Identity();
  return f;
}

ScenarioBundle build_driving_problem(const DrivingScenarioConfig& config) {
  config.validate();
  ScenarioBundle b;
  ProblemDefinition& p = b.problem;
  p.name = "driving";
  p.state_dim = 8;
  p.control_dim = 2;
  p.param_dim = 2;
  p.horizon = config.horizon;
  p.nodes = config.nodes;
  p.substeps = config.substeps;
  p.control_lower = -config.control_limit;
  p.control_upper = config.control_limit;

  p.drift = [config](const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& xi) {
    const double v = x(2), phi = x(3);
    const double c = std::cos(phi), s = std::sin(phi);
    const auto f = pedestrian_force(x.head<2>(), x.segment<2>(4), x.segment<2>(6), xi(0), xi(1),
                                    config);
    DriftEval b;
    b.value.resize(8);
    b.value << v * c, v * s, u(0), u(1), x(6), x(7), f.value;
    b.dx = Eigen::MatrixXd::Zero(8, 8);
    b.dx(0, 2) = c;
    b.dx(0, 3) = -v * s;
    b.dx(1, 2) = s;
    b.dx(1, 3) = v * c;
    b.dx(4, 6) = 1.0;
    b.dx(5, 7) = 1.0;
    b.dx.block<2, 2>(6, 0) = f.d_ego;
    b.dx.block<2, 2>(6, 4) = f.d_ped;
    b.dx.block<2, 2>(6, 6) = f.d_vel;
    b.du = Eigen::MatrixXd::Zero(8, 2);
    b.du(2, 0) = 1.0;
    b.du(3, 1) = 1.0;
    return b;
  };
  const double sigma = config.sigma;
  p.diffusion = [sigma](const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    DiffusionEval s;
    s.value = Eigen::MatrixXd::Zero(8, 8);
    s.value(6, 6) = sigma;
    s.value(7, 7) = sigma;
    return s;
  };
  const Eigen::MatrixXd R = config.effort_weight;
  p.running_cost = [R](const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return effort_cost(R, 8, u);
  };

  const double d_sep = config.separation;
  p.constraint_count = 1;
  p.constraints = [d_sep](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    const Eigen::Vector2d d = x.head<2>() - x.segment<2>(4);
    const double r = d.norm();
    ConstraintEval g;
    g.value = Eigen::VectorXd::Constant(1, d_sep - r);
    g.dx = Eigen::MatrixXd::Zero(1, 8);
    if (r > 0.0) {
      g.dx.block<1, 2>(0, 0) = -d.transpose() / r;
      g.dx.block<1, 2>(0, 4) = d.transpose() / r;
    }
    g.dxi = Eigen::MatrixXd::Zero(1, 2);
    return g;
  };
  const Eigen::Vector2d goal = config.ego_goal;
  p.equality_count = 2;
  p.terminal_equality = [goal](const Eigen::VectorXd& x) {
    ConstraintEval h;
    h.value = x.head<2>() - goal;
    h.dx = Eigen::MatrixXd::Zero(2, 8);
    h.dx.leftCols<2>().setIdentity();
    return h;
  };
  p.exclude_initial_node = true;
  p.validate();

  Eigen::VectorXd mean(8);
  mean << config.ego_initial, config.pedestrian_mean;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(8, 8);
  cov.bottomRightCorner<4, 4>() = config.pedestrian_covariance;
  b.distribution.initial_state = VectorDistribution::gaussian(mean, cov);
  b.distribution.parameters = VectorDistribution::uniform(
      Eigen::Vector2d(config.omega1.lower, config.omega2.lower),
      Eigen::Vector2d(config.omega1.upper, config.omega2.upper));
  return b;
}

}  // namespace riskscp
