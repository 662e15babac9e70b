#pragma once

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vswing/fleet.hpp"
#include "vswing/scenario.hpp"
#include "vswing/simulate.hpp"

namespace vswing {

struct BusCyclingVerdict {
  int bus = 0;
  CyclingReport report;
};

/// Derived metrics of one run: frequency excursions, rate of change,
/// settling, the worst balance gap and the per-bus cycling verdicts.
struct RunSummary {
  double freq_nadir = 1.0;
  double freq_zenith = 1.0;
  double max_rocof = 0.0;        // pu/s
  bool settled = false;
  double settle_time = 0.0;      // s, valid when settled
  bool freq_drift = false;       // frequency still far from nominal at the end
  double max_imbalance = 0.0;    // worst |shortfall| over the run
  double final_imbalance = 0.0;
  double epsilon = 0.0;          // tolerance the run was judged against
  long long switch_count = 0;
  bool cycling = false;
  std::vector<BusCyclingVerdict> per_bus_cycling;
  std::string scenario_fingerprint;
  std::string scenario_name;
  double t_end = 0.0;
  bool run_ok = true;
  std::string failure;
};

inline std::string scenario_fingerprint(const Scenario& sc) {
  const std::string s = serialize_scenario(sc);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Condense a finished run. Frequency metrics are taken over every bus
/// estimate; RoCoF uses centered differences over a 0.5 s window; settling
/// requires |f - 1| < 2e-4 on all buses sustained for 5 s after the last
/// event.
inline RunSummary summarize(const TimeSeries& ts, const SwitchLog& switches,
                            const Scenario& sc,
                            const SimulationResult* run = nullptr) {
  const int rows = ts.nrows();
  if (rows < 2)
    throw InsufficientDataError("time series too short to summarize");

  RunSummary s;
  s.scenario_name = sc.name;
  s.scenario_fingerprint = scenario_fingerprint(sc);
  s.t_end = ts.time(rows - 1);
  s.epsilon = sc.effective_epsilon();
  s.switch_count = static_cast<long long>(switches.size());
  if (run) {
    s.run_ok = run->success;
    s.failure = run->failure;
  }

  std::vector<int> fcols;
  for (int c = 0; c < ts.ncols(); ++c)
    if (ts.columns[c].rfind("f_", 0) == 0) fcols.push_back(c);

  const double dt = ts.time(1) - ts.time(0);
  const int w = std::max(1, static_cast<int>(std::lround(0.25 / dt)));
  for (int c : fcols) {
    for (int r = 0; r < rows; ++r) {
      const double f = ts.at(r, c);
      s.freq_nadir = std::min(s.freq_nadir, f);
      s.freq_zenith = std::max(s.freq_zenith, f);
      if (r >= w && r + w < rows) {
        const double rocof =
            (ts.at(r + w, c) - ts.at(r - w, c)) / (2.0 * w * dt);
        s.max_rocof = std::max(s.max_rocof, std::abs(rocof));
      }
    }
  }

  double t_last_event = 0.0;
  for (const auto& ev : sc.events) t_last_event = std::max(t_last_event, ev.t);
  const auto max_fdev = [&](int r) {
    double d = 0.0;
    for (int c : fcols) d = std::max(d, std::abs(ts.at(r, c) - 1.0));
    return d;
  };
  const int hold = std::max(1, static_cast<int>(std::lround(5.0 / dt)));
  for (int r = 0; r < rows; ++r) {
    if (ts.time(r) < t_last_event) continue;
    if (r + hold >= rows) break;
    bool ok = true;
    for (int k = r; k <= r + hold && ok; ++k) ok = max_fdev(k) < 2e-4;
    if (ok) {
      s.settled = true;
      s.settle_time = ts.time(r);
      break;
    }
  }
  s.freq_drift = max_fdev(rows - 1) > 5e-3;

  const int imb = ts.column_index("imbalance");
  for (int r = 0; r < rows; ++r)
    s.max_imbalance = std::max(s.max_imbalance, std::abs(ts.at(r, imb)));
  s.final_imbalance = ts.at(rows - 1, imb);

  // cycling: per-bus committed power resampled once per evaluation interval
  const double dt_eval =
      sc.model.fleet.empty() ? 1.0 : sc.model.min_dt_eval();
  const int stride = std::max(1, static_cast<int>(std::lround(dt_eval / dt)));
  for (int c = 0; c < ts.ncols(); ++c) {
    if (ts.columns[c].rfind("p_dd_", 0) != 0) continue;
    std::vector<double> series;
    for (int r = 0; r < rows; r += stride) series.push_back(ts.at(r, c));
    BusCyclingVerdict v;
    v.bus = std::stoi(ts.columns[c].substr(5));
    if (static_cast<int>(series.size()) >= 10)
      v.report = detect_cycling(series, dt_eval);
    s.per_bus_cycling.push_back(v);
    s.cycling |= v.report.cycling;
  }
  return s;
}

inline nlohmann::ordered_json summary_to_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["scenario_name"] = s.scenario_name;
  j["scenario_fingerprint"] = s.scenario_fingerprint;
  j["run_ok"] = s.run_ok;
  if (!s.failure.empty()) j["failure"] = s.failure;
  j["t_end"] = s.t_end;
  j["freq_nadir"] = s.freq_nadir;
  j["freq_zenith"] = s.freq_zenith;
  j["max_rocof"] = s.max_rocof;
  j["settled"] = s.settled;
  if (s.settled) j["settle_time"] = s.settle_time;
  j["freq_drift"] = s.freq_drift;
  j["max_imbalance"] = s.max_imbalance;
  j["final_imbalance"] = s.final_imbalance;
  j["epsilon"] = s.epsilon;
  j["switch_count"] = s.switch_count;
  j["cycling"] = s.cycling;
  j["per_bus_cycling"] = nlohmann::ordered_json::array();
  for (const auto& v : s.per_bus_cycling) {
    nlohmann::ordered_json jb;
    jb["bus"] = v.bus;
    jb["cycling"] = v.report.cycling;
    if (v.report.cycling) {
      jb["period"] = v.report.period;
      jb["amplitude"] = v.report.amplitude;
      jb["onset"] = v.report.onset;
    }
    j["per_bus_cycling"].push_back(jb);
  }
  return j;
}

inline RunSummary summary_from_json(const nlohmann::ordered_json& j) {
  RunSummary s;
  s.scenario_name = j.value("scenario_name", "");
  s.scenario_fingerprint = j.value("scenario_fingerprint", "");
  s.run_ok = j.value("run_ok", true);
  s.failure = j.value("failure", "");
  s.t_end = j.value("t_end", 0.0);
  s.freq_nadir = j.value("freq_nadir", 1.0);
  s.freq_zenith = j.value("freq_zenith", 1.0);
  s.max_rocof = j.value("max_rocof", 0.0);
  s.settled = j.value("settled", false);
  s.settle_time = j.value("settle_time", 0.0);
  s.freq_drift = j.value("freq_drift", false);
  s.max_imbalance = j.value("max_imbalance", 0.0);
  s.final_imbalance = j.value("final_imbalance", 0.0);
  s.epsilon = j.value("epsilon", 0.0);
  s.switch_count = j.value("switch_count", 0LL);
  s.cycling = j.value("cycling", false);
  if (j.contains("per_bus_cycling")) {
    for (const auto& jb : j.at("per_bus_cycling")) {
      BusCyclingVerdict v;
      v.bus = jb.value("bus", 0);
      v.report.cycling = jb.value("cycling", false);
      v.report.period = jb.value("period", 0.0);
      v.report.amplitude = jb.value("amplitude", 0.0);
      v.report.onset = jb.value("onset", 0.0);
      s.per_bus_cycling.push_back(v);
    }
  }
  return s;
}

inline std::string summary_to_text(const RunSummary& s) {
  std::ostringstream os;
  os << "run summary (" << s.scenario_name << ")\n";
  if (!s.run_ok) os << "  RUN FAILED: " << s.failure << "\n";
  os << "  frequency nadir / zenith : " << s.freq_nadir << " / "
     << s.freq_zenith << " pu\n";
  os << "  max RoCoF                : " << s.max_rocof << " pu/s\n";
  if (s.settled)
    os << "  settled at               : " << s.settle_time << " s\n";
  else
    os << "  settled                  : no\n";
  if (s.freq_drift)
    os << "  WARNING: frequency drift does not settle (no balancing resource?)\n";
  os << "  max |imbalance|          : " << s.max_imbalance << " pu (eps "
     << s.epsilon << ")\n";
  os << "  switch count             : " << s.switch_count << "\n";
  os << "  cycling                  : " << (s.cycling ? "yes" : "no") << "\n";
  for (const auto& v : s.per_bus_cycling)
    if (v.report.cycling)
      os << "    bus " << v.bus << ": period " << v.report.period
         << " s, amplitude " << v.report.amplitude << " pu, onset "
         << v.report.onset << " s\n";
  return os.str();
}

}  // namespace vswing
