#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "vswing/common.hpp"
#include "vswing/dynamics.hpp"

namespace vswing {

/// Nearest-multiple quantization of a power target into h blocks of size dp,
/// h in {0, ..., n_blocks}. Ties round half up.
struct Quantized {
  long long h = 0;
  double p_tilde = 0.0;
};

inline Quantized discretize_power(double p_e, double dp, long long n_blocks) {
  if (dp <= 0.0) throw ModelError("discretize_power: dp must be positive");
  if (n_blocks < 1) throw ModelError("discretize_power: n_blocks must be >= 1");
  long long h = round_half_up(p_e / dp);
  h = std::clamp(h, 0LL, n_blocks);
  return {h, static_cast<double>(h) * dp};
}

/// Deterministic evaluation offsets, uniform in [0, dt_eval).
inline std::vector<double> schedule_evaluations(int count, double dt_eval,
                                                std::uint64_t seed) {
  if (count < 1) throw ModelError("schedule_evaluations: count must be >= 1");
  if (dt_eval <= 0.0)
    throw ModelError("schedule_evaluations: dt_eval must be positive");
  std::mt19937_64 rng(seed);
  std::vector<double> phases(count);
  for (double& p : phases) {
    // top 53 bits -> [0, 1); avoids distribution objects, which are not
    // portable across standard library implementations
    p = static_cast<double>(rng() >> 11) * 0x1.0p-53 * dt_eval;
  }
  return phases;
}

/// Generation devices add blocks as positive injection; consumption devices
/// commit blocks of load, i.e. negative injection.
enum class DeviceKind { Generation, Consumption };

inline int injection_sign(DeviceKind k) {
  return k == DeviceKind::Generation ? +1 : -1;
}

/// A standalone device. Groups (below) are the form the simulator runs;
/// a single device is the unit the switching contract is written against.
struct DDDevice {
  long long id = 0;
  int bus = 0;
  DeviceKind kind = DeviceKind::Generation;
  DDParams params;
  VirtualSwingState swing;
  long long h = 0;
  double p_tilde = 0.0;  // h * dp, magnitude
  double next_eval = 0.0;

  double injection() const { return injection_sign(kind) * p_tilde; }
};

/// Sample-and-hold switching decision of one device at its evaluation
/// instant. The device re-targets only when the rotor speed error exceeds
/// the dead-band; a zero dead-band never gates. next_eval advances either
/// way. `v`, `theta` are the device's bus quantities at time t.
inline void evaluate_device(DDDevice& dev, double t, double v, double theta,
                            double omega_ref) {
  if (t < dev.next_eval - 1e-9)
    throw std::logic_error("evaluate_device called before next_eval");
  const DDParams& p = dev.params;
  if (std::abs(dev.swing.omega - omega_ref) >= p.db) {
    const double p_e =
        dd_electrical_power(dev.swing.delta, theta, v, p.k_p * p.capacity());
    const double target = injection_sign(dev.kind) * p_e;
    const Quantized q = discretize_power(target, p.dp, p.n_blocks);
    dev.h = q.h;
    dev.p_tilde = q.p_tilde;
  }
  dev.next_eval += p.dt_eval;
}

/// Append-only record of block changes.
struct SwitchEvent {
  double t = 0.0;
  long long device_id = 0;
  int bus = 0;
  long long h_old = 0;
  long long h_new = 0;
};

using SwitchLog = std::vector<SwitchEvent>;

/// Devices sharing one bus and one parameter set see identical bus inputs,
/// so they share a single virtual swing state. Discrete state stays
/// per-device: each device keeps its own block count and acts only at its
/// own evaluation instants. The group splits into a generation pool and a
/// consumption pool so the pair covers both signs of power shortfall while
/// each device's block count stays nonnegative.
class FleetGroup {
 public:
  int bus = 0;
  DDParams params;
  VirtualSwingState swing;

  FleetGroup() = default;
  FleetGroup(int bus_, DDParams params_, int count_gen, int count_cons,
             long long first_id, const std::vector<double>& phases,
             double bucket_res)
      : bus(bus_), params(params_), count_gen_(count_gen),
        count_cons_(count_cons), first_id_(first_id) {
    params.validate();
    const int n = count_gen + count_cons;
    if (n < 1) throw ModelError("fleet group needs at least one device");
    if (static_cast<int>(phases.size()) != n)
      throw ModelError("fleet group phase vector size mismatch");
    phase_.resize(n);
    for (int i = 0; i < n; ++i)
      phase_[i] = std::floor(phases[i] / bucket_res) * bucket_res;
    h_.assign(n, 0);
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(),
                     [&](int a, int b) { return phase_[a] < phase_[b]; });
  }

  int count() const { return count_gen_ + count_cons_; }
  int generation_count() const { return count_gen_; }
  int consumption_count() const { return count_cons_; }
  long long first_device_id() const { return first_id_; }
  double phase_of(int local) const { return phase_[local]; }
  long long blocks_of(int local) const { return h_[local]; }

  DeviceKind kind_of(int local) const {
    return local < count_gen_ ? DeviceKind::Generation
                              : DeviceKind::Consumption;
  }

  /// Total block capacity of the group in system pu.
  double capacity() const { return params.capacity() * count(); }

  /// Gain of the group's aggregate internal source.
  double k_emf() const { return params.k_p * capacity(); }

  /// Committed (switched) injection: dp * (generation blocks - load blocks).
  double committed_power() const {
    return params.dp * static_cast<double>(blocks_gen_ - blocks_cons_);
  }

  /// Continuously delivered power of the group's angle source.
  double emf_power(double v, double theta) const {
    return dd_electrical_power(swing.delta, theta, v, k_emf());
  }

  double reactive_factor() const { return std::tan(params.pf_angle); }

  /// Time of the next device evaluation.
  double next_eval_time() const {
    return interval_base_ + phase_[order_[cursor_]];
  }

  /// Process every device whose instant has arrived (<= t). Each due device
  /// may re-target its own blocks against the bus shortfall `sigma`
  /// (desired minus committed injection at the bus, updated in place as
  /// devices commit). Returns the net change in committed injection.
  double evaluate_due(double t, double& sigma, double omega_ref,
                      SwitchLog* log) {
    double changed = 0.0;
    const bool gate_open = std::abs(swing.omega - omega_ref) >= params.db;
    while (next_eval_time() <= t + 1e-12) {
      const int local = order_[cursor_];
      if (gate_open) {
        const int dir = injection_sign(kind_of(local));
        const long long want =
            std::clamp(h_[local] + round_half_up(dir * sigma / params.dp), 0LL,
                       static_cast<long long>(params.n_blocks));
        if (want != h_[local]) {
          const double dP = dir * static_cast<double>(want - h_[local]) *
                            params.dp;
          sigma -= dP;
          changed += dP;
          if (log)
            log->push_back({next_eval_time(), first_id_ + local, bus,
                            h_[local], want});
          if (dir > 0)
            blocks_gen_ += want - h_[local];
          else
            blocks_cons_ += want - h_[local];
          h_[local] = want;
        }
      }
      if (++cursor_ == static_cast<int>(order_.size())) {
        cursor_ = 0;
        interval_base_ += params.dt_eval;
      }
    }
    return changed;
  }

 private:
  int count_gen_ = 0;
  int count_cons_ = 0;
  long long first_id_ = 0;
  std::vector<double> phase_;
  std::vector<long long> h_;
  std::vector<int> order_;  // device indices sorted by phase
  long long blocks_gen_ = 0;
  long long blocks_cons_ = 0;
  double interval_base_ = 0.0;
  int cursor_ = 0;
};

/// Running record of the system-wide gap between what the device fleet's
/// modulation asks for and what its switched blocks deliver. Below
/// `epsilon` no further switching can improve the balance.
class BalanceMonitor {
 public:
  double epsilon = 0.0;
  double window = 10.0;

  void record(double t, double shortfall) {
    history_.emplace_back(t, shortfall);
  }
  const std::vector<std::pair<double, double>>& history() const {
    return history_;
  }
  double max_abs() const {
    double m = 0.0;
    for (const auto& [t, s] : history_) m = std::max(m, std::abs(s));
    return m;
  }

 private:
  std::vector<std::pair<double, double>> history_;
};

struct CyclingOptions {
  double window_s = 10.0;      // trailing window analysed
  double acf_threshold = 0.5;  // autocorrelation peak that flags cycling
  double amp_min = 1e-3;       // oscillation amplitude floor
};

struct CyclingReport {
  bool cycling = false;
  double period = 0.0;     // s, dominant period when cycling
  double amplitude = 0.0;  // half peak-to-peak of the analysed window
  double onset = 0.0;      // s, earliest window start that flags
};

namespace detail {

inline bool window_cycles(const std::vector<double>& s, int begin, int len,
                          double dt_eval, const CyclingOptions& opt,
                          double* period, double* amplitude) {
  double mean = 0.0;
  for (int i = 0; i < len; ++i) mean += s[begin + i];
  mean /= len;
  double var = 0.0, lo = s[begin], hi = s[begin];
  for (int i = 0; i < len; ++i) {
    const double d = s[begin + i] - mean;
    var += d * d;
    lo = std::min(lo, s[begin + i]);
    hi = std::max(hi, s[begin + i]);
  }
  *amplitude = (hi - lo) / 2.0;
  if (*amplitude < opt.amp_min || var == 0.0) return false;
  double best = -1.0;
  int best_lag = 0;
  for (int lag = 1; lag <= len / 2; ++lag) {
    double acf = 0.0;
    for (int i = 0; i + lag < len; ++i)
      acf += (s[begin + i] - mean) * (s[begin + i + lag] - mean);
    acf /= var;
    if (acf > best) {
      best = acf;
      best_lag = lag;
    }
  }
  if (best < opt.acf_threshold) return false;
  *period = best_lag * dt_eval;
  return true;
}

}  // namespace detail

/// Flag sustained periodic switching in an aggregate committed-power (or
/// block-count) series sampled once per evaluation interval. The verdict is
/// taken on the trailing window so start-up transients do not count; the
/// onset is the earliest window that already shows the pattern.
inline CyclingReport detect_cycling(const std::vector<double>& series,
                                    double dt_eval,
                                    const CyclingOptions& opt = {}) {
  const int n = static_cast<int>(series.size());
  if (n < 10)
    throw InsufficientDataError(
        "cycling detection needs at least 10 evaluation intervals, got " +
        std::to_string(n));
  const int win = std::min(
      n, std::max(10, static_cast<int>(std::lround(opt.window_s / dt_eval))));
  CyclingReport rep;
  rep.cycling = detail::window_cycles(series, n - win, win, dt_eval, opt,
                                      &rep.period, &rep.amplitude);
  if (!rep.cycling) return rep;
  rep.onset = (n - win) * dt_eval;
  for (int begin = 0; begin + win <= n; ++begin) {
    double period, amp;
    if (detail::window_cycles(series, begin, win, dt_eval, opt, &period,
                              &amp)) {
      rep.onset = begin * dt_eval;
      break;
    }
  }
  return rep;
}

}  // namespace vswing
