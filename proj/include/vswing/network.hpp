#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "vswing/common.hpp"

namespace vswing {

using Complex = std::complex<double>;

struct Bus {
  int id = 0;
  double base_kv = 230.0;
  double shunt_g = 0.0;  // pu
  double shunt_b = 0.0;  // pu

  bool operator==(const Bus&) const = default;
};

/// Series branch in the pi model. `tap` is the off-nominal ratio on the
/// `from` side; `b_half` is the line charging susceptance per end.
struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_half = 0.0;
  double tap = 1.0;
  bool status = true;

  bool operator==(const Branch&) const = default;
};

struct FaultSpec {
  int bus = 0;
  double r_fault = 1e-3;
  double t_apply = 0.0;
  double t_clear = 0.0;
};

using AdmittanceMatrix = Eigen::SparseMatrix<Complex>;

/// Assemble the bus admittance matrix from the pi model. Buses are addressed
/// by position in `buses`; branch endpoints are indices into that vector.
inline AdmittanceMatrix build_ybus(const std::vector<Bus>& buses,
                                   const std::vector<Branch>& branches) {
  const int n = static_cast<int>(buses.size());
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(buses.size() + 4 * branches.size());
  for (int b = 0; b < n; ++b) {
    if (buses[b].shunt_g != 0.0 || buses[b].shunt_b != 0.0)
      trip.emplace_back(b, b, Complex(buses[b].shunt_g, buses[b].shunt_b));
  }
  for (const auto& br : branches) {
    if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n)
      throw ModelError("branch endpoint " + std::to_string(br.from) + "-" +
                       std::to_string(br.to) + " references unknown bus");
    if (!br.status) continue;
    if (br.x == 0.0 && br.r == 0.0)
      throw ModelError("branch with zero impedance");
    if (br.tap <= 0.0) throw ModelError("branch tap must be positive");
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, br.b_half);
    const double t = br.tap;
    trip.emplace_back(br.from, br.from, (ys + ysh) / (t * t));
    trip.emplace_back(br.to, br.to, ys + ysh);
    trip.emplace_back(br.from, br.to, -ys / t);
    trip.emplace_back(br.to, br.from, -ys / t);
  }
  AdmittanceMatrix y(n, n);
  y.setFromTriplets(trip.begin(), trip.end());
  return y;
}

/// Return a copy of `ybus` with the fault conductance 1/r_fault added to the
/// diagonal of the faulted bus. Clearing is done by rebuilding, never by
/// subtracting.
inline AdmittanceMatrix apply_fault(const AdmittanceMatrix& ybus,
                                    const FaultSpec& fault) {
  if (fault.r_fault <= 0.0)
    throw ModelError("fault resistance must be positive");
  if (fault.bus < 0 || fault.bus >= ybus.rows())
    throw ModelError("fault bus " + std::to_string(fault.bus) +
                     " does not exist");
  AdmittanceMatrix y = ybus;
  y.coeffRef(fault.bus, fault.bus) += Complex(1.0 / fault.r_fault, 0.0);
  y.makeCompressed();
  return y;
}

/// Per-bus power flowing from the buses into the network, with the polar
/// Jacobian entries needed by Newton solvers.
struct NetworkFlows {
  Eigen::VectorXd p;  // active power leaving each bus into the network
  Eigen::VectorXd q;

  /// Entries of d(flow)/d(theta, v) as triplets. Rows: p-flow of bus i at
  /// `row_p(i)`, q-flow at `row_q(i)`. Columns: theta of bus j at
  /// `col_theta(j)`, v at `col_v(j)`. Skipped when a callback returns a
  /// negative index, which lets callers pin variables.
  template <typename RowP, typename RowQ, typename ColT, typename ColV,
            typename Sink>
  void jacobian(const AdmittanceMatrix& y, const Eigen::VectorXd& v,
                const Eigen::VectorXd& theta, RowP row_p, RowQ row_q,
                ColT col_theta, ColV col_v, Sink&& sink) const {
    for (int k = 0; k < y.outerSize(); ++k) {
      for (AdmittanceMatrix::InnerIterator it(y, k); it; ++it) {
        const int i = static_cast<int>(it.row());
        const int j = static_cast<int>(it.col());
        const double g = it.value().real();
        const double b = it.value().imag();
        const int rp = row_p(i), rq = row_q(i);
        const int ct = col_theta(j), cv = col_v(j);
        if (i == j) {
          if (rp >= 0 && ct >= 0) sink(rp, ct, -q(i) - b * v(i) * v(i));
          if (rp >= 0 && cv >= 0) sink(rp, cv, p(i) / v(i) + g * v(i));
          if (rq >= 0 && ct >= 0) sink(rq, ct, p(i) - g * v(i) * v(i));
          if (rq >= 0 && cv >= 0) sink(rq, cv, q(i) / v(i) - b * v(i));
        } else {
          const double tij = theta(i) - theta(j);
          const double c = std::cos(tij), s = std::sin(tij);
          const double a1 = v(i) * v(j) * (g * s - b * c);
          const double a2 = v(i) * (g * c + b * s);
          if (rp >= 0 && ct >= 0) sink(rp, ct, a1);
          if (rp >= 0 && cv >= 0) sink(rp, cv, a2);
          if (rq >= 0 && ct >= 0) sink(rq, ct, -v(j) * a2);
          if (rq >= 0 && cv >= 0) sink(rq, cv, a1 / v(j));
        }
      }
    }
  }
};

inline NetworkFlows compute_flows(const AdmittanceMatrix& y,
                                  const Eigen::VectorXd& v,
                                  const Eigen::VectorXd& theta) {
  const int n = static_cast<int>(y.rows());
  NetworkFlows f;
  f.p = Eigen::VectorXd::Zero(n);
  f.q = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < y.outerSize(); ++k) {
    for (AdmittanceMatrix::InnerIterator it(y, k); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int j = static_cast<int>(it.col());
      const double g = it.value().real();
      const double b = it.value().imag();
      const double tij = theta(i) - theta(j);
      const double vv = v(i) * v(j);
      f.p(i) += vv * (g * std::cos(tij) + b * std::sin(tij));
      f.q(i) += vv * (g * std::sin(tij) - b * std::cos(tij));
    }
  }
  return f;
}

/// Residual of the bus power balance: scheduled injection minus network
/// flow, active block first then reactive.
inline Eigen::VectorXd network_residual(const AdmittanceMatrix& y,
                                        const Eigen::VectorXd& v,
                                        const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd& p_inj,
                                        const Eigen::VectorXd& q_inj) {
  const NetworkFlows f = compute_flows(y, v, theta);
  const int n = static_cast<int>(y.rows());
  Eigen::VectorXd r(2 * n);
  r.head(n) = p_inj - f.p;
  r.tail(n) = q_inj - f.q;
  return r;
}

enum class BusType { Slack, PV, PQ };

/// One bus of a power-flow problem: scheduled net injection plus the
/// solver role. `v_set` is used for Slack and PV buses.
struct PowerFlowBus {
  BusType type = BusType::PQ;
  double p_inj = 0.0;
  double q_inj = 0.0;
  double v_set = 1.0;
};

struct PowerFlowResult {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;
  int iterations = 0;
  double max_mismatch = 0.0;
};

/// Newton power flow with a flat start. Exactly one slack bus is required.
/// Throws NumericalError with the final mismatch if the iteration cap is hit.
inline PowerFlowResult solve_power_flow(const AdmittanceMatrix& y,
                                        const std::vector<PowerFlowBus>& spec,
                                        double tol = 1e-8, int max_iter = 50) {
  const int n = static_cast<int>(spec.size());
  if (y.rows() != n) throw ModelError("power flow spec does not match ybus");
  int n_slack = 0;
  for (const auto& b : spec)
    if (b.type == BusType::Slack) ++n_slack;
  if (n_slack != 1)
    throw ModelError("power flow needs exactly one slack bus, got " +
                     std::to_string(n_slack));

  Eigen::VectorXd v(n), theta = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    v(i) = (spec[i].type == BusType::PQ) ? 1.0 : spec[i].v_set;

  // unknown ordering: theta for non-slack, then v for PQ
  std::vector<int> theta_col(n, -1), v_col(n, -1);
  int m = 0;
  for (int i = 0; i < n; ++i)
    if (spec[i].type != BusType::Slack) theta_col[i] = m++;
  for (int i = 0; i < n; ++i)
    if (spec[i].type == BusType::PQ) v_col[i] = m++;

  PowerFlowResult res;
  for (int iter = 0; iter <= max_iter; ++iter) {
    const NetworkFlows f = compute_flows(y, v, theta);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < n; ++i) {
      if (theta_col[i] >= 0) rhs(theta_col[i]) = spec[i].p_inj - f.p(i);
      if (v_col[i] >= 0) rhs(v_col[i]) = spec[i].q_inj - f.q(i);
    }
    res.max_mismatch = m > 0 ? rhs.lpNorm<Eigen::Infinity>() : 0.0;
    if (res.max_mismatch <= tol) {
      res.v = v;
      res.theta = theta;
      res.iterations = iter;
      return res;
    }
    if (iter == max_iter) break;

    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, m);
    f.jacobian(
        y, v, theta, [&](int i) { return theta_col[i]; },
        [&](int i) { return v_col[i]; }, [&](int j) { return theta_col[j]; },
        [&](int j) { return v_col[j]; },
        [&](int r, int c, double val) { jac(r, c) += val; });
    // residual = inj - flow, so the Newton matrix is -d(residual)/dx = +d(flow)/dx
    const Eigen::VectorXd dx = jac.partialPivLu().solve(rhs);
    for (int i = 0; i < n; ++i) {
      if (theta_col[i] >= 0) theta(i) += dx(theta_col[i]);
      if (v_col[i] >= 0) v(i) += dx(v_col[i]);
    }
  }
  throw NumericalError("power flow did not converge in " +
                       std::to_string(max_iter) + " iterations, mismatch " +
                       std::to_string(res.max_mismatch));
}

/// Washout bus-frequency transducer: f = 1 + (dtheta/dt)/omega_s smoothed by
/// a first-order filter with time constant t_f.
class FrequencyEstimator {
 public:
  FrequencyEstimator(double dt, double t_f, double omega_s)
      : dt_(dt), omega_s_(omega_s), beta_(std::exp(-dt / t_f)) {
    if (t_f <= 0.0) throw ModelError("frequency filter time constant must be positive");
  }

  /// Feed the next angle sample; returns the current estimate (pu).
  double push(double theta) {
    if (!primed_) {
      prev_ = theta;
      primed_ = true;
      return est_;
    }
    const double raw = 1.0 + (theta - prev_) / (dt_ * omega_s_);
    prev_ = theta;
    est_ = beta_ * est_ + (1.0 - beta_) * raw;
    return est_;
  }

  double value() const { return est_; }

 private:
  double dt_;
  double omega_s_;
  double beta_;
  double prev_ = 0.0;
  double est_ = 1.0;
  bool primed_ = false;
};

/// Filter a whole angle signal sampled at fixed dt.
inline std::vector<double> bus_frequency_estimate(
    const std::vector<double>& theta, double dt, double t_f, double omega_s) {
  FrequencyEstimator est(dt, t_f, omega_s);
  std::vector<double> out;
  out.reserve(theta.size());
  for (double th : theta) out.push_back(est.push(th));
  return out;
}

}  // namespace vswing
