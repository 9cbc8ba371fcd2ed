#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <string_view>

namespace riskscp {

/// minimize 1/2 x^T P x + q^T x
/// subject to lower <= A x <= upper, var_lower <= x <= var_upper.
/// Infinite bounds are allowed; lower == upper gives an equality row, and
/// var_lower == var_upper fixes a variable.
struct QuadraticProgram {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd var_lower;
  Eigen::VectorXd var_upper;

  int variables() const { return static_cast<int>(q.size()); }
  int rows() const { return static_cast<int>(A.rows()); }
  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }
};

enum class QpStatus { kOptimal, kMaxIterations, kInfeasible, kNumericalError };

std::string_view to_string(QpStatus status);

struct QpSettings {
  double tol = 1e-8;
  int max_iterations = 100;
};

struct QpSolution {
  QpStatus status = QpStatus::kNumericalError;
  Eigen::VectorXd x;
  /// Multipliers of the row constraints: positive at an active upper bound,
  /// negative at an active lower bound.
  Eigen::VectorXd row_duals;
  /// Same convention for the variable bounds.
  Eigen::VectorXd bound_duals;
  double objective = 0.0;
  /// Largest bound or row violation.
  double primal_residual = 0.0;
  /// || P x + q + A^T row_duals + bound_duals ||_inf.
  double dual_residual = 0.0;
  int iterations = 0;
};

/// Primal-dual interior point method with Mehrotra predictor-corrector steps.
/// Dense linear algebra: intended for tens to a few hundred variables and up
/// to several thousand rows. Infeasibility is reported through the status.
QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings = {});

/// Primal and dual residuals of an arbitrary point, in the conventions above.
void qp_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& row_duals, const Eigen::VectorXd& bound_duals,
                  double& primal, double& dual);

}  // namespace riskscp
