#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "vswing/common.hpp"
#include "vswing/dae.hpp"
#include "vswing/dynamics.hpp"
#include "vswing/fleet.hpp"
#include "vswing/model.hpp"
#include "vswing/network.hpp"

namespace vswing {

/// Runtime DAE of one grid: machine and fleet rotor states against the bus
/// power balance.
///
/// Differential states: classical machines (delta, omega, p_m) when machines
/// are dynamic, then one (delta, omega, p_ref) triple per fleet group, then
/// an optional system-reference pair (theta_ref, omega_sys) used only when
/// nothing else anchors the bus angles. Algebraic states: bus angles, bus
/// voltage magnitudes, and the absorbed slack power in reference mode.
///
/// Each fleet group couples to its bus as an internal voltage source:
/// delivered power K v sin(delta - theta). Switched blocks drive the rotor
/// and are what the group has committed; the gap between delivered and
/// committed power is the switching shortfall the balance monitor records.
class GridSystem : public DaeSystem {
 public:
  GridSystem(const SystemModel& model, Mode mode, const StepControl& control,
             std::uint64_t seed)
      : model_(model), mode_(mode), control_(control) {
    model_.validate();
    nb_ = static_cast<int>(model_.buses.size());
    busidx_ = model_.bus_index();

    branches_internal_ = model_.branches;
    for (auto& br : branches_internal_) {
      br.from = busidx_.at(br.from);
      br.to = busidx_.at(br.to);
    }
    ybus_base_ = build_ybus(model_.buses, branches_internal_);
    ybus_ = ybus_base_;

    load_on_.resize(model_.loads.size());
    for (size_t i = 0; i < model_.loads.size(); ++i)
      load_on_[i] = model_.loads[i].on;

    mach_params_.reserve(model_.machines.size());
    for (const auto& m : model_.machines) mach_params_.push_back(m.params);
    for (auto& mp : mach_params_) mp.omega_s = model_.omega_s();
    mach_p_const_.assign(model_.machines.size(), 0.0);
    mach_q_const_.assign(model_.machines.size(), 0.0);

    std::uint64_t seq = seed;
    long long next_id = 0;
    for (const auto& fe : model_.fleet) {
      if (fe.count <= 0) continue;
      const std::uint64_t sub = split_seed(seq);
      const auto phases =
          schedule_evaluations(fe.count, fe.params.dt_eval, sub);
      const int n_cons = fe.count / 2;
      const int n_gen = fe.count - n_cons;
      groups_.emplace_back(busidx_.at(fe.bus), fe.params, n_gen, n_cons,
                           next_id, phases, control_.bucket_res);
      next_id += fe.count;
    }

    dynamic_machines_ = (mode_ == Mode::CDD) && !model_.machines.empty();
    ref_mode_ = !dynamic_machines_ && groups_.empty();

    n_mach_states_ = dynamic_machines_
                         ? 3 * static_cast<int>(model_.machines.size())
                         : 0;
    nx_ = n_mach_states_ + 3 * static_cast<int>(groups_.size()) +
          (ref_mode_ ? 2 : 0);
    ny_ = 2 * nb_ + (ref_mode_ ? 1 : 0);

    if (ref_mode_) {
      slack_weights_ = Eigen::VectorXd::Zero(nb_);
      for (const auto& l : model_.loads)
        slack_weights_(busidx_.at(l.bus)) += std::max(l.p, 0.0);
      const double tot = slack_weights_.sum();
      if (tot > 0.0)
        slack_weights_ /= tot;
      else
        slack_weights_.setConstant(1.0 / nb_);
    }
  }

  int nx() const override { return nx_; }
  int ny() const override { return ny_; }
  int n_buses() const { return nb_; }
  Mode mode() const { return mode_; }
  bool reference_mode() const { return ref_mode_; }
  bool machines_dynamic() const { return dynamic_machines_; }
  const std::vector<FleetGroup>& groups() const { return groups_; }
  const SystemModel& model() const { return model_; }
  double omega_ref() const { return omega_ref_; }

  Eigen::VectorXd& x() { return x_; }
  Eigen::VectorXd& y() { return y_; }
  const Eigen::VectorXd& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }

  double bus_v(int b) const { return y_(nb_ + b); }
  double bus_theta(int b) const { return y_(b); }
  int bus_internal(int external_id) const {
    auto it = busidx_.find(external_id);
    if (it == busidx_.end())
      throw ModelError("unknown bus id " + std::to_string(external_id));
    return it->second;
  }
  int external_bus_id(int internal) const { return model_.buses[internal].id; }

  /// Solve the initial power flow and place every state at equilibrium.
  PowerFlowResult initialize() {
    std::vector<PowerFlowBus> spec(nb_);
    for (int b = 0; b < nb_; ++b) spec[b] = PowerFlowBus{BusType::PQ, 0, 0, 1.0};
    for (size_t i = 0; i < model_.loads.size(); ++i) {
      if (!load_on_[i]) continue;
      const int b = busidx_.at(model_.loads[i].bus);
      spec[b].p_inj -= model_.loads[i].p;
      spec[b].q_inj -= model_.loads[i].q;
    }
    for (const auto& m : model_.machines) {
      const int b = busidx_.at(m.bus);
      spec[b].type = m.reference ? BusType::Slack : BusType::PV;
      spec[b].v_set = m.v_set;
      if (!m.reference) spec[b].p_inj += m.p_dispatch;
    }

    const PowerFlowResult pf = solve_power_flow(ybus_base_, spec, 1e-8, 50);
    const NetworkFlows flows = compute_flows(ybus_base_, pf.v, pf.theta);

    // machine terminal powers: network flow plus the local load
    std::vector<double> mach_p(model_.machines.size(), 0.0);
    std::vector<double> mach_q(model_.machines.size(), 0.0);
    for (size_t i = 0; i < model_.machines.size(); ++i) {
      const int b = busidx_.at(model_.machines[i].bus);
      double lp = 0.0, lq = 0.0;
      for (size_t k = 0; k < model_.loads.size(); ++k) {
        if (!load_on_[k]) continue;
        if (busidx_.at(model_.loads[k].bus) == b) {
          lp += model_.loads[k].p;
          lq += model_.loads[k].q;
        }
      }
      mach_p[i] = flows.p(b) + lp;
      mach_q[i] = flows.q(b) + lq;
    }

    x_ = Eigen::VectorXd::Zero(nx_);
    y_ = Eigen::VectorXd::Zero(ny_);
    y_.head(nb_) = pf.theta;
    y_.segment(nb_, nb_) = pf.v;

    mach_emf_.assign(model_.machines.size(), 1.0);
    if (dynamic_machines_) {
      for (size_t i = 0; i < model_.machines.size(); ++i) {
        const int b = busidx_.at(model_.machines[i].bus);
        const Complex vt = std::polar(pf.v(b), pf.theta(b));
        const Complex s(mach_p[i], mach_q[i]);
        const Complex current = std::conj(s / vt);
        const Complex e = vt + Complex(0.0, mach_params_[i].xdp) * current;
        mach_emf_[i] = std::abs(e);
        const int off = 3 * static_cast<int>(i);
        x_(off) = std::arg(e);
        x_(off + 1) = 1.0;
        x_(off + 2) = mach_p[i];
        mach_params_[i].p_set = mach_p[i];
      }
    } else {
      for (size_t i = 0; i < model_.machines.size(); ++i) {
        mach_p_const_[i] = mach_p[i];
        mach_q_const_[i] = mach_q[i];
      }
    }

    for (size_t j = 0; j < groups_.size(); ++j) {
      const int off = group_offset(static_cast<int>(j));
      x_(off) = pf.theta(groups_[j].bus);  // delta = theta, zero output
      x_(off + 1) = 1.0;
      x_(off + 2) = 0.0;
    }
    if (ref_mode_) {
      x_(ref_offset()) = pf.theta(gauge_bus_);
      x_(ref_offset() + 1) = 1.0;
    }
    sync_groups_from_state();
    return pf;
  }

  // ---- DaeSystem -----------------------------------------------------

  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              Eigen::VectorXd& out) const override {
    out.resize(nx_);
    const auto theta = y.head(nb_);
    const auto v = y.segment(nb_, nb_);
    if (dynamic_machines_) {
      for (size_t i = 0; i < model_.machines.size(); ++i) {
        const int off = 3 * static_cast<int>(i);
        const int b = busidx_.at(model_.machines[i].bus);
        const MachineParams& mp = mach_params_[i];
        const MachineState ms{x(off), x(off + 1), x(off + 2)};
        const double pe = machine_electrical_power(mach_emf_[i], mp.xdp,
                                                   ms.delta, v(b), theta(b));
        const auto d = machine_derivatives(ms, pe, mp);
        out(off) = d[0];
        out(off + 1) = d[1];
        out(off + 2) = d[2];
      }
    }
    for (size_t j = 0; j < groups_.size(); ++j) {
      const int off = group_offset(static_cast<int>(j));
      const FleetGroup& g = groups_[j];
      const VirtualSwingState s{x(off), x(off + 1), x(off + 2)};
      const double drive = g.committed_power() / g.capacity();
      const auto d = dd_derivatives(s, drive, omega_ref_, g.params);
      out(off) = d[0];
      out(off + 1) = d[1];
      out(off + 2) = d[2];
    }
    if (ref_mode_) {
      const int off = ref_offset();
      out(off) = model_.omega_s() * (x(off + 1) - 1.0);
      out(off + 1) = y(2 * nb_) / (2.0 * h_sys_);
    }
  }

  void eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              Eigen::VectorXd& out) const override {
    const auto theta = y.head(nb_);
    const auto v = y.segment(nb_, nb_);
    out.resize(ny_);
    Eigen::VectorXd p_inj = Eigen::VectorXd::Zero(nb_);
    Eigen::VectorXd q_inj = Eigen::VectorXd::Zero(nb_);
    accumulate_injections(x, theta, v, p_inj, q_inj, nullptr);
    if (ref_mode_) {
      const double p_slack = y(2 * nb_);
      p_inj -= slack_weights_ * p_slack;
    }
    const NetworkFlows flows = compute_flows(ybus_, v, theta);
    out.head(nb_) = p_inj - flows.p;
    out.segment(nb_, nb_) = q_inj - flows.q;
    if (ref_mode_) out(2 * nb_) = theta(gauge_bus_) - x(ref_offset());
  }

  void eval_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     std::vector<Eigen::Triplet<double>>& out) const override {
    const auto theta = y.head(nb_);
    const auto v = y.segment(nb_, nb_);
    const auto sink = [&out](int r, int c, double val) {
      out.emplace_back(r, c, val);
    };
    const int yt = nx_;         // theta column base
    const int yv = nx_ + nb_;   // v column base
    const int gp = nx_;         // P residual row base
    const int gq = nx_ + nb_;   // Q residual row base

    if (dynamic_machines_) {
      for (size_t i = 0; i < model_.machines.size(); ++i) {
        const int off = 3 * static_cast<int>(i);
        const int b = busidx_.at(model_.machines[i].bus);
        const MachineParams& mp = mach_params_[i];
        const double e = mach_emf_[i];
        const double sd = std::sin(x(off) - theta(b));
        const double cd = std::cos(x(off) - theta(b));
        const double dpe_dd = e * v(b) * cd / mp.xdp;   // dPe/ddelta
        const double dpe_dv = e * sd / mp.xdp;
        const double dqe_dd = -e * v(b) * sd / mp.xdp;  // dQe/ddelta
        const double dqe_dv = (e * cd - 2.0 * v(b)) / mp.xdp;
        const double m2h = 2.0 * mp.h;
        // f rows
        sink(off, off + 1, mp.omega_s);
        sink(off + 1, off, -dpe_dd / m2h);
        sink(off + 1, off + 1, -mp.d / m2h);
        sink(off + 1, off + 2, 1.0 / m2h);
        sink(off + 1, yt + b, dpe_dd / m2h);
        sink(off + 1, yv + b, -dpe_dv / m2h);
        sink(off + 2, off + 1, -1.0 / (mp.r_gov * mp.t_gov));
        sink(off + 2, off + 2, -1.0 / mp.t_gov);
        // injection terms in g
        sink(gp + b, off, dpe_dd);
        sink(gp + b, yt + b, -dpe_dd);
        sink(gp + b, yv + b, dpe_dv);
        sink(gq + b, off, dqe_dd);
        sink(gq + b, yt + b, -dqe_dd);
        sink(gq + b, yv + b, dqe_dv);
      }
    }

    for (size_t j = 0; j < groups_.size(); ++j) {
      const int off = group_offset(static_cast<int>(j));
      const FleetGroup& g = groups_[j];
      const int b = g.bus;
      const DDParams& p = g.params;
      const VirtualSwingState s{x(off), x(off + 1), x(off + 2)};
      const DDJacobian dj = dd_derivatives_jacobian(s, omega_ref_, p);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          if (dj.state[r][c] != 0.0) sink(off + r, off + c, dj.state[r][c]);
      const double k = g.k_emf();
      const double cd = std::cos(x(off) - theta(b));
      const double sd = std::sin(x(off) - theta(b));
      const double tq = g.reactive_factor();
      sink(gp + b, off, k * v(b) * cd);
      sink(gp + b, yt + b, -k * v(b) * cd);
      sink(gp + b, yv + b, k * sd);
      if (tq != 0.0) {
        sink(gq + b, off, tq * k * v(b) * cd);
        sink(gq + b, yt + b, -tq * k * v(b) * cd);
        sink(gq + b, yv + b, tq * k * sd);
      }
    }

    // load voltage sensitivity below the blend threshold
    for (size_t i = 0; i < model_.loads.size(); ++i) {
      if (!load_on_[i]) continue;
      const int b = busidx_.at(model_.loads[i].bus);
      const double v0 = model_.load_blend_v0;
      if (v(b) < v0) {
        const double ds = 2.0 * v(b) / (v0 * v0);
        sink(gp + b, yv + b, -model_.loads[i].p * ds);
        sink(gq + b, yv + b, -model_.loads[i].q * ds);
      }
    }

    if (ref_mode_) {
      const int off = ref_offset();
      const int c_slack = nx_ + 2 * nb_;
      sink(off, off + 1, model_.omega_s());
      sink(off + 1, c_slack, 1.0 / (2.0 * h_sys_));
      for (int b = 0; b < nb_; ++b)
        if (slack_weights_(b) != 0.0)
          sink(gp + b, c_slack, -slack_weights_(b));
      sink(nx_ + 2 * nb_, yt + gauge_bus_, 1.0);
      sink(nx_ + 2 * nb_, off, -1.0);
    }

    // network flow terms, negated: g = injection - flow
    const NetworkFlows flows = compute_flows(ybus_, v, theta);
    flows.jacobian(
        ybus_, v, theta, [&](int i) { return gp + i; },
        [&](int i) { return gq + i; }, [&](int j) { return yt + j; },
        [&](int j) { return yv + j; },
        [&](int r, int c, double val) { out.emplace_back(r, c, -val); });
  }

  void project_y(Eigen::VectorXd& y) const override {
    for (int b = 0; b < nb_; ++b)
      y(nb_ + b) = std::max(y(nb_ + b), 1e-4);
  }

  // ---- events ---------------------------------------------------------

  void apply_event(const Event& ev) {
    switch (ev.kind) {
      case EventKind::FaultApply: {
        FaultSpec f;
        f.bus = bus_internal(ev.target);
        f.r_fault = ev.value;
        active_faults_.push_back(f);
        rebuild_ybus();
        break;
      }
      case EventKind::FaultClear: {
        const int b = bus_internal(ev.target);
        const auto it = std::find_if(
            active_faults_.begin(), active_faults_.end(),
            [b](const FaultSpec& f) { return f.bus == b; });
        if (it == active_faults_.end())
          throw ScenarioError("fault_clear at bus " + std::to_string(ev.target) +
                              " with no active fault");
        active_faults_.erase(it);
        rebuild_ybus();
        break;
      }
      case EventKind::LoadOff:
      case EventKind::LoadOn: {
        const int k = load_position(ev.target);
        load_on_[k] = (ev.kind == EventKind::LoadOn);
        break;
      }
      case EventKind::SetpointChange: {
        const int k = machine_position(ev.target);
        if (dynamic_machines_)
          mach_params_[k].p_set = ev.value;
        else
          mach_p_const_[k] = ev.value;
        break;
      }
    }
  }

  /// Re-solve the algebraic equations after a discrete jump. Tries the
  /// previous solution first, then a flat start, then, when a fault is
  /// active, a staged ramp of the fault conductance.
  void resolve_algebraic() {
    const double tol = control_.newton_tol;
    Eigen::VectorXd y_prev = y_;
    if (solve_algebraic(*this, x_, y_, tol, 60).converged) return;
    y_ = flat_algebraic_start();
    if (solve_algebraic(*this, x_, y_, tol, 60).converged) return;
    if (!active_faults_.empty()) {
      y_ = y_prev;
      const auto faults = active_faults_;
      for (double stage : {1e-3, 1e-2, 1e-1, 1.0}) {
        active_faults_ = faults;
        for (auto& f : active_faults_) f.r_fault = f.r_fault / stage;
        rebuild_ybus();
        solve_algebraic(*this, x_, y_, tol, 60);
      }
      active_faults_ = faults;
      rebuild_ybus();
      if (solve_algebraic(*this, x_, y_, tol, 60).converged) return;
    }
    throw NumericalError("algebraic re-solve failed after discrete event");
  }

  // ---- fleet coupling -------------------------------------------------

  double next_device_eval() const {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& g : groups_) t = std::min(t, g.next_eval_time());
    return t;
  }

  /// Run every device evaluation due at or before `t`. Block changes alter
  /// only rotor drives, not the algebraic equations, so no re-solve is
  /// needed afterwards.
  void run_device_evaluations(double t, SwitchLog* log) {
    if (groups_.empty()) return;
    sync_groups_from_state();
    const auto theta = y_.head(nb_);
    const auto v = y_.segment(nb_, nb_);
    // bus shortfall: delivered minus committed over each bus's groups
    bus_sigma_.assign(nb_, 0.0);
    for (const auto& g : groups_)
      bus_sigma_[g.bus] += g.emf_power(v(g.bus), theta(g.bus)) -
                           g.committed_power();
    for (auto& g : groups_)
      g.evaluate_due(t, bus_sigma_[g.bus], omega_ref_, log);
  }

  void sync_groups_from_state() {
    for (size_t j = 0; j < groups_.size(); ++j) {
      const int off = group_offset(static_cast<int>(j));
      groups_[j].swing.delta = x_(off);
      groups_[j].swing.omega = x_(off + 1);
      groups_[j].swing.p_ref = x_(off + 2);
    }
  }

  // ---- measurements ---------------------------------------------------

  /// Signed system-wide gap between delivered and committed fleet power.
  double switching_shortfall() const {
    const auto theta = y_.head(nb_);
    const auto v = y_.segment(nb_, nb_);
    double s = 0.0;
    for (const auto& g : groups_)
      s += dd_electrical_power(x_(group_offset_of(&g)), theta(g.bus),
                               v(g.bus), g.k_emf()) -
           g.committed_power();
    if (ref_mode_) s += -y_(2 * nb_);  // unserved power absorbed by the reference
    return s;
  }

  std::vector<double> per_bus_committed() const {
    std::vector<double> p(nb_, 0.0);
    for (const auto& g : groups_) p[g.bus] += g.committed_power();
    return p;
  }

  double total_committed() const {
    double p = 0.0;
    for (const auto& g : groups_) p += g.committed_power();
    return p;
  }

  /// Net switched fleet injection at one bus: (P, Q) at constant power
  /// factor. Bus given as external id.
  std::pair<double, double> aggregate_bus_injection(int external_bus) const {
    const int b = bus_internal(external_bus);
    double p = 0.0, q = 0.0;
    for (const auto& g : groups_) {
      if (g.bus != b) continue;
      p += g.committed_power();
      q += g.committed_power() * g.reactive_factor();
    }
    return {p, q};
  }

  double machine_speed(int k) const {
    if (!dynamic_machines_) return 1.0;
    return x_(3 * k + 1);
  }

  int machine_count() const { return static_cast<int>(model_.machines.size()); }

  int group_offset(int j) const { return n_mach_states_ + 3 * j; }

 private:
  int group_offset_of(const FleetGroup* g) const {
    return group_offset(static_cast<int>(g - groups_.data()));
  }
  int ref_offset() const {
    return n_mach_states_ + 3 * static_cast<int>(groups_.size());
  }

  int load_position(int load_id) const {
    for (size_t i = 0; i < model_.loads.size(); ++i)
      if (model_.loads[i].id == load_id) return static_cast<int>(i);
    throw ScenarioError("event targets unknown load " + std::to_string(load_id));
  }
  int machine_position(int machine_id) const {
    for (size_t i = 0; i < model_.machines.size(); ++i)
      if (model_.machines[i].id == machine_id) return static_cast<int>(i);
    throw ScenarioError("event targets unknown machine " +
                        std::to_string(machine_id));
  }

  void rebuild_ybus() {
    ybus_ = ybus_base_;
    for (const auto& f : active_faults_) ybus_ = apply_fault(ybus_, f);
  }

  Eigen::VectorXd flat_algebraic_start() const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(ny_);
    y.segment(nb_, nb_).setOnes();
    return y;
  }

  void accumulate_injections(const Eigen::VectorXd& x,
                             const Eigen::Ref<const Eigen::VectorXd>& theta,
                             const Eigen::Ref<const Eigen::VectorXd>& v,
                             Eigen::VectorXd& p_inj, Eigen::VectorXd& q_inj,
                             void*) const {
    for (size_t i = 0; i < model_.loads.size(); ++i) {
      if (!load_on_[i]) continue;
      const int b = busidx_.at(model_.loads[i].bus);
      const double v0 = model_.load_blend_v0;
      const double scale =
          v(b) >= v0 ? 1.0 : (v(b) * v(b)) / (v0 * v0);
      p_inj(b) -= model_.loads[i].p * scale;
      q_inj(b) -= model_.loads[i].q * scale;
    }
    for (size_t i = 0; i < model_.machines.size(); ++i) {
      const int b = busidx_.at(model_.machines[i].bus);
      if (dynamic_machines_) {
        const int off = 3 * static_cast<int>(i);
        const MachineParams& mp = mach_params_[i];
        p_inj(b) += machine_electrical_power(mach_emf_[i], mp.xdp, x(off),
                                             v(b), theta(b));
        q_inj(b) += machine_reactive_power(mach_emf_[i], mp.xdp, x(off),
                                           v(b), theta(b));
      } else {
        p_inj(b) += mach_p_const_[i];
        q_inj(b) += mach_q_const_[i];
      }
    }
    for (size_t j = 0; j < groups_.size(); ++j) {
      const int off = group_offset(static_cast<int>(j));
      const FleetGroup& g = groups_[j];
      const double pe =
          dd_electrical_power(x(off), theta(g.bus), v(g.bus), g.k_emf());
      p_inj(g.bus) += pe;
      q_inj(g.bus) += pe * g.reactive_factor();
    }
  }

  SystemModel model_;
  Mode mode_;
  StepControl control_;
  int nb_ = 0;
  std::unordered_map<int, int> busidx_;
  std::vector<Branch> branches_internal_;
  AdmittanceMatrix ybus_base_;
  AdmittanceMatrix ybus_;
  std::vector<FaultSpec> active_faults_;
  std::vector<char> load_on_;
  std::vector<MachineParams> mach_params_;
  std::vector<double> mach_p_const_, mach_q_const_;
  std::vector<double> mach_emf_;
  std::vector<FleetGroup> groups_;
  bool dynamic_machines_ = false;
  bool ref_mode_ = false;
  Eigen::VectorXd slack_weights_;
  double h_sys_ = 5.0;
  int gauge_bus_ = 0;
  double omega_ref_ = 1.0;
  int n_mach_states_ = 0;
  int nx_ = 0, ny_ = 0;
  Eigen::VectorXd x_, y_;
  std::vector<double> bus_sigma_;
};

}  // namespace vswing
