#pragma once

#include <array>
#include <cmath>

#include "vswing/common.hpp"

namespace vswing {

/// Offset dead-band: zero inside the band, continuous at the edges.
/// deadband(err, w) = 0 for |err| <= w, else sign(err) * (|err| - w).
inline double deadband(double err, double half_width) {
  if (std::abs(err) <= half_width) return 0.0;
  return err > 0.0 ? err - half_width : err + half_width;
}

/// Slope of deadband() at the current operating point (0 inside the band).
inline double deadband_slope(double err, double half_width) {
  return std::abs(err) > half_width ? 1.0 : 0.0;
}

/// Modulation power of a device whose internal source angle is `delta`,
/// connected to a bus at voltage `v`, angle `theta`:  K_p * v * sin(delta - theta).
inline double dd_electrical_power(double delta, double theta, double v,
                                  double k_p) {
  return k_p * v * std::sin(delta - theta);
}

/// State of one virtual rotor: angle (rad), speed (pu) and the droop
/// reference power (pu on the device capacity base).
struct VirtualSwingState {
  double delta = 0.0;
  double omega = 1.0;
  double p_ref = 0.0;
};

/// Per-device controller constants.
///
/// M, D, R, K_p and db are expressed on the device's own capacity base
/// (capacity = n_blocks * dp, in system pu), so one parameter set serves
/// every size class. dp is the block size in system pu. phase is the
/// device's evaluation offset within [0, dt_eval).
struct DDParams {
  double m = 5.0;        // virtual inertia (s)
  double d = 1.0;        // virtual damping
  double r = 0.05;       // droop
  double k_p = 10.0;     // source gain, emf/reactance ratio
  double db = 0.0;       // dead-band half width on the speed error (pu)
  double dp = 0.01;      // block size (system pu)
  int n_blocks = 1;      // blocks per device
  double dt_eval = 1.0;  // evaluation interval (s)
  double phase = 0.0;    // evaluation offset (s)
  double pf_angle = 0.0; // constant power-factor angle (rad)

  bool operator==(const DDParams&) const = default;

  double capacity() const { return dp * n_blocks; }

  void validate() const {
    if (m <= 0.0) throw ModelError("DDParams: M must be positive");
    if (r <= 0.0) throw ModelError("DDParams: R must be positive");
    if (dp <= 0.0) throw ModelError("DDParams: dp must be positive");
    if (n_blocks < 1) throw ModelError("DDParams: n_blocks must be >= 1");
    if (db < 0.0) throw ModelError("DDParams: db must be nonnegative");
    if (dt_eval <= 0.0) throw ModelError("DDParams: dt_eval must be positive");
    if (phase < 0.0 || phase >= dt_eval)
      throw ModelError("DDParams: phase must lie in [0, dt_eval)");
  }
};

/// Virtual swing equation right-hand side.
///
///   delta' = omega - omega_ref
///   omega' = (p_ref - p_tilde - D (omega - omega_ref)) / M
///   p_ref' = deadband(omega_ref - omega, db) / R - p_ref
///
/// `p_tilde` is the committed device power on the capacity base. The droop
/// raises p_ref when the rotor runs slow, the convention of a governor;
/// with it the closed loop against a stiff bus is stable for any positive
/// D and R.
inline std::array<double, 3> dd_derivatives(const VirtualSwingState& s,
                                            double p_tilde, double omega_ref,
                                            const DDParams& p) {
  const double dw = s.omega - omega_ref;
  return {dw, (s.p_ref - p_tilde - p.d * dw) / p.m,
          deadband(-dw, p.db) / p.r - s.p_ref};
}

/// Analytic Jacobian of dd_derivatives: 3x3 block over (delta, omega, p_ref)
/// plus the sensitivity of each row to p_tilde.
struct DDJacobian {
  std::array<std::array<double, 3>, 3> state;
  std::array<double, 3> p_tilde;
};

inline DDJacobian dd_derivatives_jacobian(const VirtualSwingState& s,
                                          double omega_ref,
                                          const DDParams& p) {
  const double dw = s.omega - omega_ref;
  DDJacobian j{};
  j.state[0] = {0.0, 1.0, 0.0};
  j.state[1] = {0.0, -p.d / p.m, 1.0 / p.m};
  j.state[2] = {0.0, -deadband_slope(-dw, p.db) / p.r, -1.0};
  j.p_tilde = {0.0, -1.0 / p.m, 0.0};
  return j;
}

/// Classical machine with a first-order droop governor.
struct MachineState {
  double delta = 0.0;  // rotor angle (rad)
  double omega = 1.0;  // speed (pu)
  double p_m = 0.0;    // mechanical power (pu)
};

struct MachineParams {
  double h = 5.0;        // inertia constant (s)
  double d = 2.0;        // damping
  double xdp = 0.15;     // transient reactance (pu)
  double r_gov = 0.05;   // governor droop
  double t_gov = 0.5;    // governor time constant (s)
  double p_set = 0.0;    // dispatch setpoint (pu)
  double emf = 1.0;      // internal emf magnitude (pu)
  double omega_s = 2.0 * kPi * 60.0;

  bool operator==(const MachineParams&) const = default;

  void validate() const {
    if (h <= 0.0) throw ModelError("MachineParams: H must be positive");
    if (xdp <= 0.0) throw ModelError("MachineParams: xdp must be positive");
    if (r_gov <= 0.0) throw ModelError("MachineParams: droop must be positive");
    if (t_gov <= 0.0)
      throw ModelError("MachineParams: governor time constant must be positive");
  }
};

///   delta' = omega_s (omega - 1)
///   omega' = (p_m - p_e - D (omega - 1)) / (2H)
///   p_m'   = (p_set - (omega - 1)/R - p_m) / T_gov
inline std::array<double, 3> machine_derivatives(const MachineState& s,
                                                 double p_e,
                                                 const MachineParams& p) {
  const double dw = s.omega - 1.0;
  return {p.omega_s * dw, (s.p_m - p_e - p.d * dw) / (2.0 * p.h),
          (p.p_set - dw / p.r_gov - s.p_m) / p.t_gov};
}

/// Active power delivered by emf `e` at angle `delta` through reactance
/// `xdp` into a bus at `v`, `theta`.
inline double machine_electrical_power(double e, double xdp, double delta,
                                       double v, double theta) {
  return e * v * std::sin(delta - theta) / xdp;
}

/// Reactive power injected into the bus by the same source.
inline double machine_reactive_power(double e, double xdp, double delta,
                                     double v, double theta) {
  return (e * v * std::cos(delta - theta) - v * v) / xdp;
}

}  // namespace vswing
