#pragma once

#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "vswing/common.hpp"
#include "vswing/dae.hpp"
#include "vswing/model.hpp"

namespace vswing {

/// A complete run definition: one grid, its contingency schedule, fleet
/// placement, solver settings and reproducibility seed.
struct Scenario {
  int schema_version = 1;
  std::string name;
  Mode mode = Mode::SDD;
  double t_end = 40.0;
  std::uint64_t seed = 1;
  double epsilon = 0.0;  // balance tolerance; 0 derives 2x smallest block
  SystemModel model;
  std::vector<Event> events;
  StepControl control;

  bool operator==(const Scenario&) const = default;

  double effective_epsilon() const {
    return epsilon > 0.0 ? epsilon : 2.0 * model.min_block_size();
  }

  std::vector<std::string> validation_errors() const {
    auto errs = model.validation_errors();
    if (t_end <= 0.0) errs.push_back("t_end must be positive");
    if (epsilon < 0.0) errs.push_back("epsilon must be nonnegative");
    const auto idx = model.bus_index();
    for (const auto& ev : events) {
      if (ev.t < 0.0) errs.push_back("event at negative time");
      switch (ev.kind) {
        case EventKind::FaultApply:
          if (ev.value <= 0.0)
            errs.push_back("fault_apply needs positive fault resistance");
          [[fallthrough]];
        case EventKind::FaultClear:
          if (!idx.count(ev.target))
            errs.push_back("fault event references unknown bus " +
                           std::to_string(ev.target));
          break;
        case EventKind::LoadOff:
        case EventKind::LoadOn: {
          bool found = false;
          for (const auto& l : model.loads) found |= (l.id == ev.target);
          if (!found)
            errs.push_back("load event references unknown load " +
                           std::to_string(ev.target));
          break;
        }
        case EventKind::SetpointChange: {
          bool found = false;
          for (const auto& m : model.machines) found |= (m.id == ev.target);
          if (!found)
            errs.push_back("setpoint event references unknown machine " +
                           std::to_string(ev.target));
          break;
        }
      }
    }
    if (!model.fleet.empty()) {
      try {
        control.validate(model.min_dt_eval());
      } catch (const ModelError& e) {
        errs.push_back(e.what());
      }
    }
    return errs;
  }

  void validate() const {
    const auto errs = validation_errors();
    if (!errs.empty()) {
      std::string all = "invalid scenario:";
      for (const auto& e : errs) all += "\n  - " + e;
      throw ScenarioError(all);
    }
  }
};

/// Split `total` devices of each size class evenly over the buses,
/// remainders going to the lowest bus positions.
inline std::vector<int> split_evenly(int total, int cells) {
  std::vector<int> out(cells, total / cells);
  for (int i = 0; i < total % cells; ++i) ++out[i];
  return out;
}

/// Modified 9-bus benchmark: three machines behind step-up transformers,
/// PQ loads of 2.0, 0.9 and 1.0 pu at buses 5, 6 and 8 with the bus-5 load
/// split into 1.1 + 0.3 + 0.6, and a device fleet of four size classes
/// {1e-2, 1e-3, 1e-4, 1e-5} pu spread evenly over all nine buses.
///
/// Standalone mode stages three contingencies: the 1.1 pu load trips at
/// t=15 s, a bolted fault (1e-3 pu) hits bus 5 from t=20 s to t=22 s, and
/// the load reconnects at t=35 s. Complementary mode trips an equivalent
/// load worth 7% of the system demand at t=15 s.
inline Scenario wscc9_builtin(Mode mode, int dd_count, std::uint64_t seed) {
  if (dd_count < 0) throw ScenarioError("dd_count must be nonnegative");
  Scenario sc;
  sc.mode = mode;
  sc.seed = seed;
  sc.t_end = 40.0;
  sc.name = mode == Mode::SDD ? "wscc9-sdd" : "wscc9-cdd";

  SystemModel& m = sc.model;
  m.base_mva = 100.0;
  m.base_freq_hz = 60.0;

  const double kv[9] = {16.5, 18.0, 13.8, 230, 230, 230, 230, 230, 230};
  for (int i = 0; i < 9; ++i) m.buses.push_back({i + 1, kv[i], 0.0, 0.0});

  m.branches = {
      {1, 4, 0.0, 0.0576, 0.0, 1.0, true},     // step-up transformers
      {2, 7, 0.0, 0.0625, 0.0, 1.0, true},
      {3, 9, 0.0, 0.0586, 0.0, 1.0, true},
      {4, 5, 0.010, 0.085, 0.088, 1.0, true},  // lines
      {4, 6, 0.017, 0.092, 0.079, 1.0, true},
      {5, 7, 0.032, 0.161, 0.153, 1.0, true},
      {6, 9, 0.039, 0.170, 0.179, 1.0, true},
      {7, 8, 0.0085, 0.072, 0.0745, 1.0, true},
      {8, 9, 0.0119, 0.1008, 0.1045, 1.0, true},
  };

  MachineParams g1{23.64, 2.0, 0.0608, 0.05, 0.5};
  MachineParams g2{6.40, 2.0, 0.1198, 0.05, 0.5};
  MachineParams g3{3.01, 2.0, 0.1813, 0.05, 0.5};
  m.machines = {
      {1, 1, true, 0.0, 1.04, g1},
      {2, 2, false, 1.63, 1.025, g2},
      {3, 3, false, 0.85, 1.025, g3},
  };

  if (mode == Mode::SDD) {
    m.loads = {
        {1, 5, 1.1, 0.275, true},
        {2, 5, 0.3, 0.075, true},
        {3, 5, 0.6, 0.150, true},
        {4, 6, 0.9, 0.300, true},
        {5, 8, 1.0, 0.350, true},
    };
    sc.events = {
        {15.0, EventKind::LoadOff, 1, 0.0},
        {20.0, EventKind::FaultApply, 5, 1e-3},
        {22.0, EventKind::FaultClear, 5, 0.0},
        {35.0, EventKind::LoadOn, 1, 0.0},
    };
  } else {
    // the 0.6 pu block donates an equivalent load worth 7% of the 3.9 pu
    // system demand, tripped as the single contingency
    m.loads = {
        {1, 5, 1.1, 0.275, true},
        {2, 5, 0.3, 0.075, true},
        {3, 5, 0.327, 0.08175, true},
        {4, 5, 0.273, 0.06825, true},
        {5, 6, 0.9, 0.300, true},
        {6, 8, 1.0, 0.350, true},
    };
    sc.events = {
        {15.0, EventKind::LoadOff, 4, 0.0},
    };
  }

  const double sizes[4] = {1e-2, 1e-3, 1e-4, 1e-5};
  const auto per_class = split_evenly(dd_count, 4);
  for (int c = 0; c < 4; ++c) {
    if (per_class[c] == 0) continue;
    const auto per_bus = split_evenly(per_class[c], 9);
    for (int b = 0; b < 9; ++b) {
      if (per_bus[b] == 0) continue;
      DDParams p;
      p.dp = sizes[c];
      FleetEntry fe{b + 1, per_bus[b], p};
      m.fleet.push_back(fe);
    }
  }
  return sc;
}

// ---- structured text (JSON) serialization ------------------------------

namespace detail {

using json = nlohmann::ordered_json;

inline void check_keys(const json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok |= (it.key() == k);
    if (!ok)
      throw ScenarioError("unknown key \"" + it.key() + "\" in " + where);
  }
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw ScenarioError("missing required key \"" + std::string(key) +
                        "\" in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ScenarioError("bad value for \"" + std::string(key) + "\" in " +
                        where + ": " + e.what());
  }
}

template <typename T>
T optional_of(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline const char* kind_name(EventKind k) {
  switch (k) {
    case EventKind::FaultApply: return "fault_apply";
    case EventKind::FaultClear: return "fault_clear";
    case EventKind::LoadOff: return "load_off";
    case EventKind::LoadOn: return "load_on";
    case EventKind::SetpointChange: return "setpoint_change";
  }
  return "?";
}

inline EventKind kind_from(const std::string& s) {
  if (s == "fault_apply") return EventKind::FaultApply;
  if (s == "fault_clear") return EventKind::FaultClear;
  if (s == "load_off") return EventKind::LoadOff;
  if (s == "load_on") return EventKind::LoadOn;
  if (s == "setpoint_change") return EventKind::SetpointChange;
  throw ScenarioError("unknown event kind \"" + s + "\"");
}

}  // namespace detail

inline std::string serialize_scenario(const Scenario& sc) {
  using detail::json;
  json j;
  j["schema_version"] = sc.schema_version;
  j["name"] = sc.name;
  j["mode"] = sc.mode == Mode::SDD ? "SDD" : "CDD";
  j["t_end"] = sc.t_end;
  j["seed"] = sc.seed;
  j["epsilon"] = sc.epsilon;
  j["base_mva"] = sc.model.base_mva;
  j["base_freq_hz"] = sc.model.base_freq_hz;
  j["load_blend_v0"] = sc.model.load_blend_v0;
  j["control"] = {{"h_step", sc.control.h_step},
                  {"newton_tol", sc.control.newton_tol},
                  {"max_newton", sc.control.max_newton},
                  {"sample_dt", sc.control.sample_dt},
                  {"bucket_res", sc.control.bucket_res}};
  j["buses"] = json::array();
  for (const auto& b : sc.model.buses)
    j["buses"].push_back({{"id", b.id},
                          {"base_kv", b.base_kv},
                          {"shunt_g", b.shunt_g},
                          {"shunt_b", b.shunt_b}});
  j["branches"] = json::array();
  for (const auto& br : sc.model.branches)
    j["branches"].push_back({{"from", br.from},
                             {"to", br.to},
                             {"r", br.r},
                             {"x", br.x},
                             {"b_half", br.b_half},
                             {"tap", br.tap},
                             {"status", br.status}});
  j["machines"] = json::array();
  for (const auto& mc : sc.model.machines)
    j["machines"].push_back({{"id", mc.id},
                             {"bus", mc.bus},
                             {"reference", mc.reference},
                             {"p_dispatch", mc.p_dispatch},
                             {"v_set", mc.v_set},
                             {"h", mc.params.h},
                             {"d", mc.params.d},
                             {"xdp", mc.params.xdp},
                             {"r_gov", mc.params.r_gov},
                             {"t_gov", mc.params.t_gov}});
  j["loads"] = json::array();
  for (const auto& l : sc.model.loads)
    j["loads"].push_back({{"id", l.id},
                          {"bus", l.bus},
                          {"p", l.p},
                          {"q", l.q},
                          {"on", l.on}});
  j["fleet"] = json::array();
  for (const auto& fe : sc.model.fleet)
    j["fleet"].push_back({{"bus", fe.bus},
                          {"count", fe.count},
                          {"dp", fe.params.dp},
                          {"n_blocks", fe.params.n_blocks},
                          {"m", fe.params.m},
                          {"d", fe.params.d},
                          {"r", fe.params.r},
                          {"k_p", fe.params.k_p},
                          {"db", fe.params.db},
                          {"dt_eval", fe.params.dt_eval},
                          {"pf_angle", fe.params.pf_angle}});
  j["events"] = json::array();
  for (const auto& ev : sc.events)
    j["events"].push_back({{"t", ev.t},
                           {"kind", detail::kind_name(ev.kind)},
                           {"target", ev.target},
                           {"value", ev.value}});
  return j.dump(2) + "\n";
}

/// Parse a scenario from its structured text form. Unknown keys are
/// rejected; all semantic problems are reported together.
inline Scenario parse_scenario(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario parse error: ") + e.what());
  }
  detail::check_keys(
      j,
      {"schema_version", "name", "mode", "t_end", "seed", "epsilon",
       "base_mva", "base_freq_hz", "load_blend_v0", "control", "buses",
       "branches", "machines", "loads", "fleet", "events"},
      "scenario");

  Scenario sc;
  sc.schema_version = detail::require<int>(j, "schema_version", "scenario");
  if (sc.schema_version != 1)
    throw ScenarioError("unsupported schema_version " +
                        std::to_string(sc.schema_version));
  sc.name = detail::optional_of<std::string>(j, "name", "");
  const auto mode = detail::require<std::string>(j, "mode", "scenario");
  if (mode == "SDD")
    sc.mode = Mode::SDD;
  else if (mode == "CDD")
    sc.mode = Mode::CDD;
  else
    throw ScenarioError("mode must be SDD or CDD, got \"" + mode + "\"");
  sc.t_end = detail::require<double>(j, "t_end", "scenario");
  sc.seed = detail::optional_of<std::uint64_t>(j, "seed", 1);
  sc.epsilon = detail::optional_of<double>(j, "epsilon", 0.0);
  sc.model.base_mva = detail::require<double>(j, "base_mva", "scenario");
  sc.model.base_freq_hz =
      detail::optional_of<double>(j, "base_freq_hz", 60.0);
  sc.model.load_blend_v0 =
      detail::optional_of<double>(j, "load_blend_v0", 0.6);

  if (j.contains("control")) {
    const auto& jc = j.at("control");
    detail::check_keys(
        jc, {"h_step", "newton_tol", "max_newton", "sample_dt", "bucket_res"},
        "control");
    sc.control.h_step = detail::optional_of<double>(jc, "h_step", 0.01);
    sc.control.newton_tol =
        detail::optional_of<double>(jc, "newton_tol", 1e-8);
    sc.control.max_newton = detail::optional_of<int>(jc, "max_newton", 20);
    sc.control.sample_dt = detail::optional_of<double>(jc, "sample_dt", 0.01);
    sc.control.bucket_res =
        detail::optional_of<double>(jc, "bucket_res", 1e-3);
  }

  for (const auto& jb : detail::optional_of<json>(j, "buses", json::array())) {
    detail::check_keys(jb, {"id", "base_kv", "shunt_g", "shunt_b"}, "bus");
    Bus b;
    b.id = detail::require<int>(jb, "id", "bus");
    b.base_kv = detail::optional_of<double>(jb, "base_kv", 230.0);
    b.shunt_g = detail::optional_of<double>(jb, "shunt_g", 0.0);
    b.shunt_b = detail::optional_of<double>(jb, "shunt_b", 0.0);
    sc.model.buses.push_back(b);
  }
  for (const auto& jb :
       detail::optional_of<json>(j, "branches", json::array())) {
    detail::check_keys(jb, {"from", "to", "r", "x", "b_half", "tap", "status"},
                       "branch");
    Branch br;
    br.from = detail::require<int>(jb, "from", "branch");
    br.to = detail::require<int>(jb, "to", "branch");
    br.r = detail::optional_of<double>(jb, "r", 0.0);
    br.x = detail::require<double>(jb, "x", "branch");
    br.b_half = detail::optional_of<double>(jb, "b_half", 0.0);
    br.tap = detail::optional_of<double>(jb, "tap", 1.0);
    br.status = detail::optional_of<bool>(jb, "status", true);
    sc.model.branches.push_back(br);
  }
  for (const auto& jm :
       detail::optional_of<json>(j, "machines", json::array())) {
    detail::check_keys(jm,
                       {"id", "bus", "reference", "p_dispatch", "v_set", "h",
                        "d", "xdp", "r_gov", "t_gov"},
                       "machine");
    MachineSpec ms;
    ms.id = detail::require<int>(jm, "id", "machine");
    ms.bus = detail::require<int>(jm, "bus", "machine");
    ms.reference = detail::optional_of<bool>(jm, "reference", false);
    ms.p_dispatch = detail::optional_of<double>(jm, "p_dispatch", 0.0);
    ms.v_set = detail::optional_of<double>(jm, "v_set", 1.0);
    ms.params.h = detail::optional_of<double>(jm, "h", 5.0);
    ms.params.d = detail::optional_of<double>(jm, "d", 2.0);
    ms.params.xdp = detail::optional_of<double>(jm, "xdp", 0.15);
    ms.params.r_gov = detail::optional_of<double>(jm, "r_gov", 0.05);
    ms.params.t_gov = detail::optional_of<double>(jm, "t_gov", 0.5);
    sc.model.machines.push_back(ms);
  }
  for (const auto& jl : detail::optional_of<json>(j, "loads", json::array())) {
    detail::check_keys(jl, {"id", "bus", "p", "q", "on"}, "load");
    Load l;
    l.id = detail::require<int>(jl, "id", "load");
    l.bus = detail::require<int>(jl, "bus", "load");
    l.p = detail::require<double>(jl, "p", "load");
    l.q = detail::optional_of<double>(jl, "q", 0.0);
    l.on = detail::optional_of<bool>(jl, "on", true);
    sc.model.loads.push_back(l);
  }
  for (const auto& jf : detail::optional_of<json>(j, "fleet", json::array())) {
    detail::check_keys(jf,
                       {"bus", "count", "dp", "n_blocks", "m", "d", "r", "k_p",
                        "db", "dt_eval", "pf_angle"},
                       "fleet entry");
    FleetEntry fe;
    fe.bus = detail::require<int>(jf, "bus", "fleet entry");
    fe.count = detail::require<int>(jf, "count", "fleet entry");
    fe.params.dp = detail::require<double>(jf, "dp", "fleet entry");
    fe.params.n_blocks = detail::optional_of<int>(jf, "n_blocks", 1);
    fe.params.m = detail::optional_of<double>(jf, "m", 5.0);
    fe.params.d = detail::optional_of<double>(jf, "d", 1.0);
    fe.params.r = detail::optional_of<double>(jf, "r", 0.05);
    fe.params.k_p = detail::optional_of<double>(jf, "k_p", 10.0);
    fe.params.db = detail::optional_of<double>(jf, "db", 0.0);
    fe.params.dt_eval = detail::optional_of<double>(jf, "dt_eval", 1.0);
    fe.params.pf_angle = detail::optional_of<double>(jf, "pf_angle", 0.0);
    sc.model.fleet.push_back(fe);
  }
  for (const auto& je :
       detail::optional_of<json>(j, "events", json::array())) {
    detail::check_keys(je, {"t", "kind", "target", "value"}, "event");
    Event ev;
    ev.t = detail::require<double>(je, "t", "event");
    ev.kind =
        detail::kind_from(detail::require<std::string>(je, "kind", "event"));
    ev.target = detail::require<int>(je, "target", "event");
    ev.value = detail::optional_of<double>(je, "value", 0.0);
    sc.events.push_back(ev);
  }

  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

/// Apply one `key=value` override to a parsed scenario. `dd.*` keys apply
/// to every fleet entry.
inline void apply_override(Scenario& sc, const std::string& key,
                           const std::string& value) {
  const auto num = [&]() {
    try {
      return std::stod(value);
    } catch (...) {
      throw ScenarioError("override " + key + ": bad numeric value \"" +
                          value + "\"");
    }
  };
  if (key == "t_end") sc.t_end = num();
  else if (key == "seed") sc.seed = static_cast<std::uint64_t>(num());
  else if (key == "epsilon") sc.epsilon = num();
  else if (key == "mode") {
    if (value == "SDD") sc.mode = Mode::SDD;
    else if (value == "CDD") sc.mode = Mode::CDD;
    else throw ScenarioError("override mode: must be SDD or CDD");
  } else if (key == "load_blend_v0") sc.model.load_blend_v0 = num();
  else if (key == "control.h_step") sc.control.h_step = num();
  else if (key == "control.sample_dt") sc.control.sample_dt = num();
  else if (key == "control.bucket_res") sc.control.bucket_res = num();
  else if (key == "control.newton_tol") sc.control.newton_tol = num();
  else if (key == "control.max_newton")
    sc.control.max_newton = static_cast<int>(num());
  else if (key.rfind("dd.", 0) == 0) {
    const std::string f = key.substr(3);
    for (auto& fe : sc.model.fleet) {
      if (f == "m") fe.params.m = num();
      else if (f == "d") fe.params.d = num();
      else if (f == "r") fe.params.r = num();
      else if (f == "k_p") fe.params.k_p = num();
      else if (f == "db") fe.params.db = num();
      else if (f == "dt_eval") fe.params.dt_eval = num();
      else if (f == "n_blocks") fe.params.n_blocks = static_cast<int>(num());
      else if (f == "pf_angle") fe.params.pf_angle = num();
      else throw ScenarioError("unknown override key " + key);
    }
  } else {
    throw ScenarioError("unknown override key " + key);
  }
}

}  // namespace vswing
