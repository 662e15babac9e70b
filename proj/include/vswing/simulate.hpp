#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "vswing/dae.hpp"
#include "vswing/fleet.hpp"
#include "vswing/grid.hpp"
#include "vswing/network.hpp"

namespace vswing {

/// Fixed-schema sampled trajectories, row major. Column 0 is time.
struct TimeSeries {
  std::vector<std::string> columns;
  std::vector<double> data;

  int ncols() const { return static_cast<int>(columns.size()); }
  int nrows() const {
    return columns.empty() ? 0 : static_cast<int>(data.size()) / ncols();
  }
  double at(int row, int col) const { return data[row * ncols() + col]; }
  double time(int row) const { return at(row, 0); }

  int column_index(const std::string& name) const {
    for (int c = 0; c < ncols(); ++c)
      if (columns[c] == name) return c;
    throw ModelError("time series has no column " + name);
  }

  std::vector<double> column(int c) const {
    std::vector<double> out(nrows());
    for (int r = 0; r < nrows(); ++r) out[r] = at(r, c);
    return out;
  }
  std::vector<double> column(const std::string& name) const {
    return column(column_index(name));
  }

  void to_csv(std::ostream& os) const {
    for (int c = 0; c < ncols(); ++c)
      os << (c ? "," : "") << columns[c];
    os << "\n";
    char buf[32];
    for (int r = 0; r < nrows(); ++r) {
      for (int c = 0; c < ncols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.12g", at(r, c));
        os << (c ? "," : "") << buf;
      }
      os << "\n";
    }
  }
};

inline void switch_log_to_csv(const SwitchLog& log, std::ostream& os) {
  os << "t,device_id,bus,h_old,h_new\n";
  char buf[32];
  for (const auto& s : log) {
    std::snprintf(buf, sizeof(buf), "%.12g", s.t);
    os << buf << "," << s.device_id << "," << s.bus << "," << s.h_old << ","
       << s.h_new << "\n";
  }
}

struct SimulationResult {
  TimeSeries series;
  SwitchLog switches;
  BalanceMonitor monitor;
  bool success = true;
  std::string failure;
  double t_final = 0.0;
};

namespace detail {

inline void advance_interval(GridSystem& sys, double h, double tol,
                             int max_newton, int depth, double t_at) {
  const Eigen::VectorXd xs = sys.x();
  const Eigen::VectorXd ys = sys.y();
  const NewtonReport rep =
      trapezoidal_step(sys, sys.x(), sys.y(), h, tol, max_newton);
  if (rep.converged) return;
  sys.x() = xs;
  sys.y() = ys;
  if (depth <= 0) {
    std::string where = "row " + std::to_string(rep.worst_row);
    const int nx = sys.nx(), nb = sys.n_buses();
    if (rep.worst_row >= nx && rep.worst_row < nx + 2 * nb) {
      const int b = (rep.worst_row - nx) % nb;
      where = std::string(rep.worst_row - nx < nb ? "P" : "Q") +
              " balance at bus " +
              std::to_string(sys.external_bus_id(b));
    }
    throw NumericalError("integration step failed near t=" +
                         std::to_string(t_at) + " (h=" + std::to_string(h) +
                         "), worst mismatch " + std::to_string(rep.residual) +
                         " in " + where);
  }
  advance_interval(sys, h / 2.0, tol, max_newton, depth - 1, t_at);
  advance_interval(sys, h / 2.0, tol, max_newton, depth - 1, t_at + h / 2.0);
}

}  // namespace detail

/// Advance the hybrid system to t_end. Steps never straddle a timed event,
/// a device evaluation instant, or an output sample: the step is shortened
/// to the earliest breakpoint, the discrete actions fire exactly there, and
/// integration resumes. Deterministic for fixed inputs.
///
/// `on_sample`, when set, is called at every logged sample with the system
/// in its just-sampled state.
inline SimulationResult simulate(
    GridSystem& sys, std::vector<Event> events, const StepControl& control,
    double t_end,
    const std::function<void(double, const GridSystem&)>& on_sample = {}) {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  for (const auto& ev : events)
    if (ev.t < 0.0) throw ScenarioError("event scheduled at negative time");

  const int nb = sys.n_buses();
  const int nm = sys.machine_count();
  SimulationResult res;
  res.monitor.epsilon = 2.0 * sys.model().min_block_size();

  TimeSeries& ts = res.series;
  ts.columns.push_back("t");
  for (int b = 0; b < nb; ++b)
    ts.columns.push_back("v_" + std::to_string(sys.external_bus_id(b)));
  for (int b = 0; b < nb; ++b)
    ts.columns.push_back("theta_" + std::to_string(sys.external_bus_id(b)));
  for (int b = 0; b < nb; ++b)
    ts.columns.push_back("f_" + std::to_string(sys.external_bus_id(b)));
  for (int m = 0; m < nm; ++m)
    ts.columns.push_back("omega_m" +
                         std::to_string(sys.model().machines[m].id));
  for (int b = 0; b < nb; ++b)
    ts.columns.push_back("p_dd_" + std::to_string(sys.external_bus_id(b)));
  ts.columns.push_back("imbalance");

  std::vector<FrequencyEstimator> pll;
  pll.reserve(nb);
  for (int b = 0; b < nb; ++b)
    pll.emplace_back(control.sample_dt, 0.05, sys.model().omega_s());

  const auto log_sample = [&](double t) {
    ts.data.push_back(t);
    for (int b = 0; b < nb; ++b) ts.data.push_back(sys.bus_v(b));
    for (int b = 0; b < nb; ++b) ts.data.push_back(sys.bus_theta(b));
    for (int b = 0; b < nb; ++b)
      ts.data.push_back(pll[b].push(sys.bus_theta(b)));
    for (int m = 0; m < nm; ++m) ts.data.push_back(sys.machine_speed(m));
    const auto pdd = sys.per_bus_committed();
    for (int b = 0; b < nb; ++b) ts.data.push_back(pdd[b]);
    const double shortfall = sys.switching_shortfall();
    ts.data.push_back(shortfall);
    res.monitor.record(t, shortfall);
    if (on_sample) on_sample(t, sys);
  };

  double t = 0.0;
  size_t ev_ptr = 0;
  double next_sample = 0.0;
  constexpr double kTimeEps = 1e-9;

  // discrete actions scheduled exactly at t=0 fire before the first sample
  bool z_changed = false;
  while (ev_ptr < events.size() && events[ev_ptr].t <= kTimeEps) {
    sys.apply_event(events[ev_ptr++]);
    z_changed = true;
  }
  if (z_changed) sys.resolve_algebraic();
  sys.run_device_evaluations(t, &res.switches);
  log_sample(t);
  next_sample = control.sample_dt;

  try {
    while (t < t_end - kTimeEps) {
      double tau = std::min(t + control.h_step, t_end);
      if (ev_ptr < events.size()) tau = std::min(tau, events[ev_ptr].t);
      tau = std::min(tau, sys.next_device_eval());
      tau = std::min(tau, next_sample);

      if (tau > t + kTimeEps) {
        detail::advance_interval(sys, tau - t, control.newton_tol,
                                 control.max_newton, 5, t);
      }
      t = tau;

      z_changed = false;
      while (ev_ptr < events.size() && events[ev_ptr].t <= t + kTimeEps) {
        sys.apply_event(events[ev_ptr++]);
        z_changed = true;
      }
      if (z_changed) sys.resolve_algebraic();
      sys.run_device_evaluations(t, &res.switches);

      if (t >= next_sample - kTimeEps) {
        log_sample(t);
        next_sample += control.sample_dt;
      }
    }
  } catch (const NumericalError& e) {
    res.success = false;
    res.failure = e.what();
  }
  res.t_final = t;
  return res;
}

}  // namespace vswing
