#include "riskscp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "riskscp/errors.hpp"

namespace riskscp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Where an internal inequality row g^T x <= h came from.
struct Origin {
  bool is_bound;  // variable bound (index = variable) or A row (index = row)
  int index;
  double sign;   // +1 for an upper bound, -1 for a lower bound
  double scale;  // row normalization applied
};

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  }
  return step;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

class ReducedProblem {
 public:
  ReducedProblem(const QuadraticProgram& qp) : qp_(qp) {}

  // Returns false if some bound pair is inconsistent.
  bool build() {
    const int n = qp_.variables();
    full_index_.clear();
    reduced_index_.assign(n, -1);
    x_fixed_ = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
      if (qp_.var_lower(j) > qp_.var_upper(j)) return false;
      if (qp_.var_lower(j) == qp_.var_upper(j)) {
        x_fixed_(j) = qp_.var_lower(j);
      } else {
        reduced_index_[j] = static_cast<int>(full_index_.size());
        full_index_.push_back(j);
      }
    }
    const int nf = free_count();

    P_.resize(nf, nf);
    q_.resize(nf);
    const Eigen::VectorXd px = qp_.P * x_fixed_;
    for (int a = 0; a < nf; ++a) {
      q_(a) = qp_.q(full_index_[a]) + px(full_index_[a]);
      for (int b = 0; b < nf; ++b) P_(a, b) = qp_.P(full_index_[a], full_index_[b]);
    }
    P_ = 0.5 * (P_ + P_.transpose()).eval();

    const Eigen::VectorXd offset = qp_.A * x_fixed_;
    std::vector<Eigen::Triplet<double>> g_entries;
    std::vector<Eigen::VectorXd> e_rows;
    std::vector<double> h, f;
    std::vector<std::pair<int, double>> a;
    int g_count = 0;
    const auto push_g = [&](double sign, double scale, double bound) {
      for (const auto& [c, v] : a) g_entries.emplace_back(g_count, c, sign * v * scale);
      h.push_back(sign * bound * scale);
      ++g_count;
    };
    for (int r = 0; r < qp_.rows(); ++r) {
      a.clear();
      double norm = 0.0;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(qp_.A, r); it; ++it) {
        const int c = reduced_index_[it.col()];
        if (c < 0 || it.value() == 0.0) continue;
        a.emplace_back(c, it.value());
        norm = std::max(norm, std::abs(it.value()));
      }
      const double lo = qp_.lower(r) - offset(r);
      const double up = qp_.upper(r) - offset(r);
      if (lo > up) return false;
      if (norm == 0.0) {
        if (lo > 1e-12 || up < -1e-12) return false;
        continue;
      }
      const double scale = 1.0 / norm;
      if (lo == up) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nf);
        for (const auto& [c, v] : a) row(c) = v * scale;
        e_rows.push_back(row);
        f.push_back(lo * scale);
        eq_origin_.push_back({false, r, 1.0, scale});
        continue;
      }
      if (up < kInf) {
        push_g(1.0, scale, up);
        origin_.push_back({false, r, 1.0, scale});
      }
      if (lo > -kInf) {
        push_g(-1.0, scale, lo);
        origin_.push_back({false, r, -1.0, scale});
      }
    }
    for (int c = 0; c < nf; ++c) {
      const int j = full_index_[c];
      for (double sign : {1.0, -1.0}) {
        const double bound = sign > 0 ? qp_.var_upper(j) : qp_.var_lower(j);
        if (!std::isfinite(bound)) continue;
        a.assign(1, {c, 1.0});
        push_g(sign, 1.0, bound);
        origin_.push_back({true, j, sign, 1.0});
      }
    }

    G_.resize(g_count, nf);
    G_.setFromTriplets(g_entries.begin(), g_entries.end());
    h_ = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
    E_.resize(static_cast<Eigen::Index>(e_rows.size()), nf);
    for (std::size_t r = 0; r < e_rows.size(); ++r) E_.row(r) = e_rows[r].transpose();
    f_ = Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    return true;
  }

  int free_count() const { return static_cast<int>(full_index_.size()); }

  const QuadraticProgram& qp_;
  std::vector<int> full_index_;
  std::vector<int> reduced_index_;
  Eigen::VectorXd x_fixed_;
  Eigen::MatrixXd P_, E_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> G_;  // inequality rows g^T x <= h
  Eigen::VectorXd q_, h_, f_;
  std::vector<Origin> origin_;
  std::vector<Origin> eq_origin_;
};

// Newton system of the reduced KKT conditions at the current scaling W = z / s.
class NewtonSystem {
 public:
  bool factor(const ReducedProblem& rp, const Eigen::VectorXd& w) {
    const Eigen::Index n = rp.free_count();
    const Eigen::Index me = rp.E_.rows();
    Eigen::MatrixXd H = rp.P_;
    const double reg = 1e-11 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    if (rp.G_.rows() > 0) {
      // Lower triangle of G^T W G, one sparse row at a time.
      for (Eigen::Index r = 0; r < rp.G_.rows(); ++r) {
        const int begin = rp.G_.outerIndexPtr()[r], end = rp.G_.outerIndexPtr()[r + 1];
        const int* cols = rp.G_.innerIndexPtr();
        const double* vals = rp.G_.valuePtr();
        for (int a = begin; a < end; ++a) {
          const double wa = w(r) * vals[a];
          for (int b = begin; b <= a; ++b) H(std::max(cols[a], cols[b]), std::min(cols[a], cols[b])) += wa * vals[b];
        }
      }
      H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
    }
    H.diagonal().array() += reg;
    me_ = me;
    if (me == 0) {
      llt_.compute(H);
      use_llt_ = llt_.info() == Eigen::Success;
      if (use_llt_) return true;
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + me, n + me);
    K.topLeftCorner(n, n) = H;
    K.topRightCorner(n, me) = rp.E_.transpose();
    K.bottomLeftCorner(me, n) = rp.E_;
    K.bottomRightCorner(me, me).diagonal().setConstant(-reg);
    lu_.compute(K);
    use_llt_ = false;
    return std::isfinite(lu_.rcond()) && lu_.rcond() > 1e-300;
  }

  void solve(const Eigen::VectorXd& rhs_x, const Eigen::VectorXd& rhs_y, Eigen::VectorXd& dx,
             Eigen::VectorXd& dy) const {
    if (use_llt_) {
      dx = llt_.solve(rhs_x);
      dy.resize(0);
      return;
    }
    Eigen::VectorXd rhs(rhs_x.size() + rhs_y.size());
    rhs << rhs_x, rhs_y;
    const Eigen::VectorXd sol = lu_.solve(rhs);
    dx = sol.head(rhs_x.size());
    dy = sol.tail(rhs_y.size());
  }

 private:
  Eigen::Index me_ = 0;
  bool use_llt_ = false;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

}  // namespace

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kMaxIterations: return "max_iterations";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kNumericalError: return "numerical_error";
  }
  return "unknown";
}

void qp_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& row_duals, const Eigen::VectorXd& bound_duals,
                  double& primal, double& dual) {
  primal = 0.0;
  const Eigen::VectorXd ax = qp.A * x;
  for (Eigen::Index r = 0; r < ax.size(); ++r) {
    primal = std::max({primal, ax(r) - qp.upper(r), qp.lower(r) - ax(r)});
  }
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    primal = std::max({primal, x(j) - qp.var_upper(j), qp.var_lower(j) - x(j)});
  }
  const Eigen::VectorXd stationarity =
      qp.P * x + qp.q + qp.A.transpose() * row_duals + bound_duals;
  dual = inf_norm(stationarity);
}

QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings) {
  const int n = qp.variables();
  if (qp.P.rows() != n || qp.P.cols() != n || qp.A.cols() != n || qp.lower.size() != qp.rows() ||
      qp.upper.size() != qp.rows() || qp.var_lower.size() != n || qp.var_upper.size() != n) {
    throw UsageError("solve_qp: inconsistent problem dimensions");
  }
  if (!(settings.tol > 0.0) || settings.max_iterations < 1) {
    throw UsageError("solve_qp: tolerance must be positive and max_iterations >= 1");
  }

  QpSolution out;
  out.x = Eigen::VectorXd::Zero(n);
  out.row_duals = Eigen::VectorXd::Zero(qp.rows());
  out.bound_duals = Eigen::VectorXd::Zero(n);

  ReducedProblem rp(qp);
  if (!rp.build()) {
    out.status = QpStatus::kInfeasible;
    qp_residuals(qp, out.x, out.row_duals, out.bound_duals, out.primal_residual, out.dual_residual);
    return out;
  }

  const Eigen::Index nf = rp.free_count();
  const Eigen::Index mi = rp.G_.rows();
  const Eigen::Index me = rp.E_.rows();
  const double tol = settings.tol;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd s = (rp.h_ - rp.G_ * x).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(mi);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);

  const double q_scale = 1.0 + inf_norm(rp.q_);
  NewtonSystem newton;
  QpStatus status = QpStatus::kMaxIterations;
  int it = 0;
  for (; it < settings.max_iterations; ++it) {
    const Eigen::VectorXd gz = rp.G_.transpose() * z;
    Eigen::VectorXd r_d = rp.P_ * x + rp.q_ + gz;
    if (me > 0) r_d += rp.E_.transpose() * y;
    const Eigen::VectorXd r_p = rp.G_ * x + s - rp.h_;
    const Eigen::VectorXd r_e = me > 0 ? Eigen::VectorXd(rp.E_ * x - rp.f_) : Eigen::VectorXd();
    const double gap = s.dot(z);
    const double obj = 0.5 * x.dot(rp.P_ * x) + rp.q_.dot(x);

    if (!r_d.allFinite() || !r_p.allFinite() || !std::isfinite(gap)) {
      status = QpStatus::kNumericalError;
      break;
    }
    const double pres = std::max(inf_norm(r_p), inf_norm(r_e));
    const double dres = inf_norm(r_d);
    const double dual_scale = std::max(q_scale, 1.0 + inf_norm(gz));
    if (pres <= tol && dres <= tol * dual_scale && gap <= tol * (1.0 + std::abs(obj))) {
      status = QpStatus::kOptimal;
      break;
    }
    if (inf_norm(z) > 1e12 * dual_scale && pres > tol) {
      status = QpStatus::kInfeasible;
      break;
    }

    const Eigen::VectorXd w = z.cwiseQuotient(s);
    if (!newton.factor(rp, w)) {
      status = QpStatus::kNumericalError;
      break;
    }
    const double mu = mi > 0 ? gap / static_cast<double>(mi) : 0.0;

    // Solves the linearized KKT system for complementarity residual r_c.
    auto direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx, Eigen::VectorXd& ds,
                         Eigen::VectorXd& dz, Eigen::VectorXd& dy) {
      const Eigen::VectorXd t = w.cwiseProduct(r_p) - r_c.cwiseQuotient(s);
      Eigen::VectorXd rhs_x = -r_d - rp.G_.transpose() * t;
      Eigen::VectorXd rhs_y = me > 0 ? Eigen::VectorXd(-r_e) : Eigen::VectorXd();
      newton.solve(rhs_x, rhs_y, dx, dy);
      dz = w.cwiseProduct(rp.G_ * dx + r_p) - r_c.cwiseQuotient(s);
      ds = -(r_c + s.cwiseProduct(dz)).cwiseQuotient(z);
    };

    Eigen::VectorXd dx, ds, dz, dy;
    direction(s.cwiseProduct(z), dx, ds, dz, dy);
    const double step_aff = std::min(max_step(s, ds), max_step(z, dz));
    double sigma = 0.0;
    if (mi > 0) {
      const double mu_aff = (s + step_aff * ds).dot(z + step_aff * dz) / static_cast<double>(mi);
      sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3);
      const Eigen::VectorXd r_c =
          s.cwiseProduct(z) + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(mi, sigma * mu);
      direction(r_c, dx, ds, dz, dy);
      // The second-order term can blow up when the affine step is tiny; fall
      // back to the plain centered direction if it shortens the step.
      if (std::min(max_step(s, ds), max_step(z, dz)) < std::min(step_aff, 1.0)) {
        const Eigen::VectorXd centered = s.cwiseProduct(z) - Eigen::VectorXd::Constant(mi, sigma * mu);
        direction(centered, dx, ds, dz, dy);
      }
    }
    const double step = mi > 0 ? std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz))) : 1.0;
    x += step * dx;
    s += step * ds;
    z += step * dz;
    if (me > 0) y += step * dy;
    // Keep strictly interior against rounding.
    s = s.cwiseMax(1e-300);
    z = z.cwiseMax(1e-300);
  }

  // Map back to the caller's variables and multiplier conventions.
  out.status = status;
  out.iterations = it;
  for (Eigen::Index a = 0; a < nf; ++a) out.x(rp.full_index_[a]) = x(a);
  for (int j = 0; j < n; ++j) {
    if (rp.reduced_index_[j] < 0) out.x(j) = rp.x_fixed_(j);
  }
  for (Eigen::Index r = 0; r < mi; ++r) {
    const Origin& o = rp.origin_[r];
    const double mult = o.sign * o.scale * z(r);
    if (o.is_bound) {
      out.bound_duals(o.index) += mult;
    } else {
      out.row_duals(o.index) += mult;
    }
  }
  for (Eigen::Index r = 0; r < me; ++r) {
    const Origin& o = rp.eq_origin_[r];
    out.row_duals(o.index) += o.scale * y(r);
  }
  // Fixed variables absorb their own stationarity residual.
  const Eigen::VectorXd stationarity = qp.P * out.x + qp.q + qp.A.transpose() * out.row_duals;
  for (int j = 0; j < n; ++j) {
    if (rp.reduced_index_[j] < 0) out.bound_duals(j) = -stationarity(j);
  }
  out.objective = qp.objective(out.x);
  qp_residuals(qp, out.x, out.row_duals, out.bound_duals, out.primal_residual, out.dual_residual);
  return out;
}

}  // namespace riskscp
