#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "riskscp/ocp.hpp"
#include "riskscp/sampling.hpp"

namespace riskscp {

// Signed-distance style obstacle constraints in position space. Each returns
// G <= 0 outside, G = 0 on the boundary and G > 0 inside.

/// 1 - (p - o)^T Q (p - o); dp and do are the gradients w.r.t. p and o.
struct EllipsoidTerm {
  double value;
  Eigen::Vector3d dp;
  Eigen::Vector3d d_center;
  Eigen::Vector3d d_axes;  // for Q = diag((axes + padding)^-2)
};
EllipsoidTerm ellipsoid_constraint(const Eigen::Vector3d& p, const Eigen::Vector3d& center,
                                   const Eigen::Vector3d& axes, double padding = 0.0);

/// (r + padding) - ||p - o||. Gradients are zero at the center.
struct SphereTerm {
  double value;
  Eigen::Vector3d dp;
  Eigen::Vector3d d_center;
  double d_radius;
};
SphereTerm sphere_constraint(const Eigen::Vector3d& p, const Eigen::Vector3d& center, double radius,
                             double padding = 0.0);

/// Axis-aligned ellipsoid with uniformly distributed center and semi-axes.
struct EllipsoidObstacle {
  Eigen::Vector3d center_lower, center_upper;
  Eigen::Vector3d axes_lower, axes_upper;
};

struct SphereObstacle {
  Eigen::Vector3d center_lower, center_upper;
  double radius_lower = 0.0, radius_upper = 0.0;
};

/// Uncertain obstacles. Parameter layout: per ellipsoid (center, axes), then
/// per sphere (center, radius).
struct ObstacleSet {
  std::vector<EllipsoidObstacle> ellipsoids;
  std::vector<SphereObstacle> spheres;
  double padding = 0.0;

  int count() const { return static_cast<int>(ellipsoids.size() + spheres.size()); }
  int param_dim() const { return static_cast<int>(6 * ellipsoids.size() + 4 * spheres.size()); }
  Eigen::VectorXd param_lower() const;
  Eigen::VectorXd param_upper() const;
  /// Values and position / parameter gradients for p and a parameter block.
  void evaluate(const Eigen::Vector3d& p, const Eigen::VectorXd& params, Eigen::VectorXd& value,
                Eigen::MatrixXd& dp, Eigen::MatrixXd& dparams) const;
  void validate() const;
};

/// A problem plus the distribution of its epistemic quantities.
struct ScenarioBundle {
  ProblemDefinition problem;
  ScenarioDistribution distribution;
};

struct DroneScenarioConfig {
  Interval mass{1.0, 1.5};  // kg
  double drag = 0.1;        // beta_drag
  double diffusion = 0.1;   // beta_sigma
  /// u + K x enters the acceleration; the default damps velocity.
  Eigen::Matrix<double, 3, 6> feedback_gain = Eigen::Matrix<double, 3, 6>::Zero();
  ObstacleSet obstacles;
  Eigen::Matrix<double, 6, 1> initial_state = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> goal = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix3d effort_weight = Eigen::Matrix3d::Identity();
  double horizon = 5.0;
  int nodes = 20;
  int substeps = 1;
  double control_limit = 10.0;  // N, per component

  void validate() const;
};

DroneScenarioConfig default_drone_config();

/// x = (p, v) in R^6, u in R^3, xi = (mass, obstacle parameters).
ScenarioBundle build_drone_problem(const DroneScenarioConfig& config);

struct DrivingScenarioConfig {
  Eigen::Vector4d ego_initial = Eigen::Vector4d::Zero();  // (px, py, v, heading)
  Eigen::Vector4d pedestrian_mean = Eigen::Vector4d::Zero();  // (qx, qy, wx, wy)
  Eigen::Matrix4d pedestrian_covariance = Eigen::Matrix4d::Zero();
  Interval omega1{1.0, 1.0};  // relaxation rate toward the desired velocity, 1/s
  Interval omega2{0.0, 0.0};  // interaction gain, m/s^2; negative pushes away from the car
  double desired_speed = 1.0;
  Eigen::Vector2d direction{0.0, 1.0};
  double sigma = 0.1;  // pedestrian velocity diffusion
  double separation = 2.0;
  double smoothing = 1e-3;  // delta in sqrt(||d||^2 + delta^2)
  Eigen::Vector2d ego_goal = Eigen::Vector2d::Zero();
  Eigen::Matrix2d effort_weight = Eigen::Matrix2d::Identity();
  double horizon = 6.0;
  int nodes = 20;
  int substeps = 1;
  Eigen::Vector2d control_limit{5.0, 1.0};  // (acceleration, steering rate)

  void validate() const;
};

DrivingScenarioConfig default_driving_config();

/// x = (ego px, py, v, heading, pedestrian qx, qy, wx, wy), u = (a, tau),
/// xi = (omega1, omega2).
ScenarioBundle build_driving_problem(const DrivingScenarioConfig& config);

/// Social-force acceleration of the pedestrian and its partials.
struct PedestrianForce {
  Eigen::Vector2d value;
  Eigen::Matrix2d d_ego;  // w.r.t. ego position
  Eigen::Matrix2d d_ped;  // w.r.t. pedestrian position
  Eigen::Matrix2d d_vel;  // w.r.t. pedestrian velocity
};
PedestrianForce pedestrian_force(const Eigen::Vector2d& ego, const Eigen::Vector2d& ped,
                                 const Eigen::Vector2d& vel, double omega1, double omega2,
                                 const DrivingScenarioConfig& config);

}  // namespace riskscp
