#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vswing/common.hpp"
#include "vswing/dynamics.hpp"
#include "vswing/network.hpp"

namespace vswing {

/// Standalone mode runs machines as constant-PQ injections so the switched
/// fleet is the only balancing resource; complementary mode gives machines
/// rotor and governor dynamics.
enum class Mode { SDD, CDD };

struct Load {
  int id = 0;
  int bus = 0;  // external bus id
  double p = 0.0;
  double q = 0.0;
  bool on = true;

  bool operator==(const Load&) const = default;
};

struct MachineSpec {
  int id = 0;
  int bus = 0;  // external bus id
  bool reference = false;
  double p_dispatch = 0.0;
  double v_set = 1.0;
  MachineParams params;

  bool operator==(const MachineSpec&) const = default;
};

/// One fleet position: `count` identical devices at a bus. Devices split
/// evenly into a generation pool and a consumption pool.
struct FleetEntry {
  int bus = 0;
  int count = 0;
  DDParams params;

  bool operator==(const FleetEntry&) const = default;
};

/// Static description of one grid. Elements reference buses by external id.
struct SystemModel {
  double base_mva = 100.0;
  double base_freq_hz = 60.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;  // from/to are external bus ids
  std::vector<MachineSpec> machines;
  std::vector<Load> loads;
  std::vector<FleetEntry> fleet;

  /// Constant-power loads turn constant-impedance below this voltage so the
  /// algebraic equations stay solvable through bolted faults.
  double load_blend_v0 = 0.6;

  bool operator==(const SystemModel&) const = default;

  double omega_s() const { return 2.0 * kPi * base_freq_hz; }

  std::unordered_map<int, int> bus_index() const {
    std::unordered_map<int, int> map;
    for (int i = 0; i < static_cast<int>(buses.size()); ++i)
      map.emplace(buses[i].id, i);
    return map;
  }

  /// Collect every consistency problem instead of stopping at the first.
  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errs;
    if (base_mva <= 0.0) errs.push_back("base power must be positive");
    if (base_freq_hz <= 0.0) errs.push_back("base frequency must be positive");
    const auto idx = bus_index();
    if (idx.size() != buses.size()) errs.push_back("duplicate bus ids");
    auto check_bus = [&](int bus, const std::string& what) {
      if (!idx.count(bus))
        errs.push_back(what + " references unknown bus " +
                       std::to_string(bus));
    };
    for (const auto& br : branches) {
      check_bus(br.from, "branch");
      check_bus(br.to, "branch");
      if (br.x == 0.0 && br.r == 0.0) errs.push_back("branch with zero impedance");
      if (br.tap <= 0.0) errs.push_back("branch tap must be positive");
    }
    std::unordered_map<int, int> machine_buses;
    int n_ref = 0;
    for (const auto& m : machines) {
      check_bus(m.bus, "machine " + std::to_string(m.id));
      if (machine_buses.count(m.bus))
        errs.push_back("more than one machine at bus " + std::to_string(m.bus));
      machine_buses.emplace(m.bus, m.id);
      if (m.reference) ++n_ref;
      try {
        m.params.validate();
      } catch (const ModelError& e) {
        errs.push_back("machine " + std::to_string(m.id) + ": " + e.what());
      }
    }
    if (!machines.empty() && n_ref != 1)
      errs.push_back("exactly one reference machine required, got " +
                     std::to_string(n_ref));
    for (const auto& l : loads) {
      check_bus(l.bus, "load " + std::to_string(l.id));
      if (l.p < 0.0) errs.push_back("load " + std::to_string(l.id) +
                                    " has negative active power");
    }
    for (const auto& fe : fleet) {
      check_bus(fe.bus, "fleet entry");
      if (fe.count < 0) errs.push_back("fleet entry with negative count");
      if (fe.count > 0) {
        try {
          fe.params.validate();
        } catch (const ModelError& e) {
          errs.push_back(std::string("fleet entry: ") + e.what());
        }
      }
    }
    return errs;
  }

  void validate() const {
    auto errs = validation_errors();
    if (!errs.empty()) {
      std::string all = "model validation failed:";
      for (const auto& e : errs) all += "\n  - " + e;
      throw ModelError(all);
    }
  }

  /// Smallest block size present, or 0 for an empty fleet.
  double min_block_size() const {
    double dp = 0.0;
    for (const auto& fe : fleet)
      if (fe.count > 0 && (dp == 0.0 || fe.params.dp < dp)) dp = fe.params.dp;
    return dp;
  }

  /// Smallest evaluation interval present, used to cap the integrator step.
  double min_dt_eval() const {
    double dt = std::numeric_limits<double>::infinity();
    for (const auto& fe : fleet)
      if (fe.count > 0) dt = std::min(dt, fe.params.dt_eval);
    return dt;
  }

  double total_load() const {
    double p = 0.0;
    for (const auto& l : loads) p += l.p;
    return p;
  }
};

enum class EventKind {
  FaultApply,
  FaultClear,
  LoadOff,
  LoadOn,
  SetpointChange
};

/// Timed discrete action. `target` is a bus id for faults, a load id for
/// load switching, a machine id for setpoint changes. `value` carries the
/// fault resistance or the new setpoint.
struct Event {
  double t = 0.0;
  EventKind kind = EventKind::LoadOff;
  int target = 0;
  double value = 0.0;

  bool operator==(const Event&) const = default;
};

}  // namespace vswing
