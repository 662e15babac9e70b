#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <string>
#include <vector>

#include "vswing/common.hpp"

namespace vswing {

/// Semi-explicit DAE:  x' = f(x, y),  0 = g(x, y).
/// Systems are autonomous between discrete events; the driver freezes all
/// discrete state for the duration of one step.
class DaeSystem {
 public:
  virtual ~DaeSystem() = default;
  virtual int nx() const = 0;
  virtual int ny() const = 0;
  virtual void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      Eigen::VectorXd& out) const = 0;
  virtual void eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      Eigen::VectorXd& out) const = 0;

  /// Jacobian of [f; g] with respect to [x; y] as triplets of the
  /// (nx+ny) x (nx+ny) matrix. Rows < nx are f rows, the rest g rows;
  /// columns < nx are x, the rest y.
  virtual void eval_jacobian(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y,
                             std::vector<Eigen::Triplet<double>>& out)
      const = 0;

  /// Clamp algebraic iterates back into the feasible region (e.g. keep
  /// voltage magnitudes positive). Called after every Newton update.
  virtual void project_y(Eigen::VectorXd& y) const { (void)y; }
};

struct StepControl {
  double h_step = 0.01;      // base integration step (s)
  double newton_tol = 1e-8;
  int max_newton = 20;
  double sample_dt = 0.01;   // output cadence (s)
  double bucket_res = 1e-3;  // device evaluation instants snap to this grid

  bool operator==(const StepControl&) const = default;

  void validate(double min_dt_eval) const {
    if (h_step <= 0.0) throw ModelError("h_step must be positive");
    if (h_step > min_dt_eval / 2.0)
      throw ModelError("h_step must not exceed half the smallest dt_eval");
    if (newton_tol <= 0.0) throw ModelError("newton_tol must be positive");
    if (max_newton < 1) throw ModelError("max_newton must be >= 1");
    if (sample_dt <= 0.0) throw ModelError("sample_dt must be positive");
    if (bucket_res <= 0.0) throw ModelError("bucket_res must be positive");
  }
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  int worst_row = -1;  // row of the largest residual entry at exit
};

namespace detail {

inline int worst_row_of(const Eigen::VectorXd& r) {
  int idx = 0;
  r.cwiseAbs().maxCoeff(&idx);
  return idx;
}

}  // namespace detail

/// One implicit trapezoidal step of length h:
///   x1 = x0 + h/2 (f(x0,y0) + f(x1,y1)),  g(x1,y1) = 0
/// solved simultaneously by Newton. On success x, y hold the new state.
inline NewtonReport trapezoidal_step(const DaeSystem& sys, Eigen::VectorXd& x,
                                     Eigen::VectorXd& y, double h,
                                     double tol, int max_iter) {
  const int nx = sys.nx();
  const int ny = sys.ny();
  const int n = nx + ny;

  Eigen::VectorXd f0(nx), f1(nx), g1(ny), resid(n);
  const Eigen::VectorXd x0 = x, y0 = y;
  sys.eval_f(x0, y0, f0);

  std::vector<Eigen::Triplet<double>> jac_sys, jac_newton;
  Eigen::SparseMatrix<double> a(n, n);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;

  NewtonReport rep;
  for (int iter = 0; iter <= max_iter; ++iter) {
    sys.eval_f(x, y, f1);
    if (ny > 0) sys.eval_g(x, y, g1);
    resid.head(nx) = x - x0 - (h / 2.0) * (f0 + f1);
    if (ny > 0) resid.tail(ny) = g1;
    rep.residual = resid.lpNorm<Eigen::Infinity>();
    rep.iterations = iter;
    if (rep.residual <= tol) {
      rep.converged = true;
      return rep;
    }
    if (iter == max_iter) break;

    jac_sys.clear();
    sys.eval_jacobian(x, y, jac_sys);
    jac_newton.clear();
    jac_newton.reserve(jac_sys.size() + nx);
    for (const auto& t : jac_sys) {
      if (t.row() < nx) {
        jac_newton.emplace_back(t.row(), t.col(), -(h / 2.0) * t.value());
      } else {
        jac_newton.emplace_back(t.row(), t.col(), t.value());
      }
    }
    for (int i = 0; i < nx; ++i) jac_newton.emplace_back(i, i, 1.0);

    a.setZero();
    a.setFromTriplets(jac_newton.begin(), jac_newton.end());
    lu.compute(a);
    if (lu.info() != Eigen::Success) {
      rep.worst_row = detail::worst_row_of(resid);
      return rep;
    }
    const Eigen::VectorXd dz = lu.solve(-resid);
    x += dz.head(nx);
    if (ny > 0) {
      y += dz.tail(ny);
      sys.project_y(y);
    }
    if (!x.allFinite() || !y.allFinite()) break;
  }
  rep.worst_row = detail::worst_row_of(resid);
  return rep;
}

/// Newton solve of g(x, y) = 0 in y with x held fixed. Per-iteration updates
/// are clipped to `max_delta` to survive large discrete jumps.
inline NewtonReport solve_algebraic(const DaeSystem& sys,
                                    const Eigen::VectorXd& x,
                                    Eigen::VectorXd& y, double tol,
                                    int max_iter, double max_delta = 0.5) {
  const int nx = sys.nx();
  const int ny = sys.ny();
  NewtonReport rep;
  if (ny == 0) {
    rep.converged = true;
    return rep;
  }

  Eigen::VectorXd g(ny);
  std::vector<Eigen::Triplet<double>> jac_sys, jac_g;
  Eigen::SparseMatrix<double> a(ny, ny);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;

  for (int iter = 0; iter <= max_iter; ++iter) {
    sys.eval_g(x, y, g);
    rep.residual = g.lpNorm<Eigen::Infinity>();
    rep.iterations = iter;
    if (rep.residual <= tol) {
      rep.converged = true;
      return rep;
    }
    if (iter == max_iter) break;

    jac_sys.clear();
    sys.eval_jacobian(x, y, jac_sys);
    jac_g.clear();
    for (const auto& t : jac_sys)
      if (t.row() >= nx && t.col() >= nx)
        jac_g.emplace_back(t.row() - nx, t.col() - nx, t.value());
    a.setZero();
    a.setFromTriplets(jac_g.begin(), jac_g.end());
    lu.compute(a);
    if (lu.info() != Eigen::Success) {
      rep.worst_row = detail::worst_row_of(g);
      return rep;
    }
    Eigen::VectorXd dy = lu.solve(-g);
    const double step = dy.lpNorm<Eigen::Infinity>();
    if (step > max_delta) dy *= max_delta / step;
    y += dy;
    sys.project_y(y);
    if (!y.allFinite()) break;
  }
  rep.worst_row = detail::worst_row_of(g);
  return rep;
}

}  // namespace vswing
