#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "vswing/grid.hpp"
#include "vswing/scenario.hpp"
#include "vswing/simulate.hpp"
#include "vswing/summary.hpp"

namespace vswing {

inline int log_level() {
  const char* env = std::getenv("VSWING_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

struct RunConfig {
  std::string builtin;        // built-in scenario name, or empty
  std::string scenario_path;  // file path, or empty
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds;  // empty: scenario default
  int dd_count = -1;                 // builtin only; -1 keeps the default
  std::string mode_override;         // "", "SDD", "CDD"
  double t_end = -1.0;               // -1 keeps the default
  std::vector<std::pair<std::string, std::string>> overrides;
  int jobs = 1;
};

inline Scenario build_scenario(const RunConfig& cfg) {
  Scenario sc;
  if (!cfg.builtin.empty() && !cfg.scenario_path.empty())
    throw ScenarioError("give either a built-in name or a scenario file, not both");
  if (cfg.builtin.empty() && cfg.scenario_path.empty())
    throw ScenarioError("no scenario given");
  if (!cfg.builtin.empty()) {
    Mode mode;
    if (cfg.builtin == "wscc9-sdd") mode = Mode::SDD;
    else if (cfg.builtin == "wscc9-cdd") mode = Mode::CDD;
    else throw ScenarioError("unknown built-in scenario \"" + cfg.builtin +
                             "\" (available: wscc9-sdd, wscc9-cdd)");
    if (!cfg.mode_override.empty())
      mode = cfg.mode_override == "CDD" ? Mode::CDD : Mode::SDD;
    const int count = cfg.dd_count >= 0 ? cfg.dd_count : 30000;
    sc = wscc9_builtin(mode, count,
                       cfg.seeds.empty() ? 1 : cfg.seeds.front());
  } else {
    if (cfg.dd_count >= 0)
      throw ScenarioError("--dd-count applies only to built-in scenarios");
    sc = load_scenario(cfg.scenario_path);
    if (!cfg.mode_override.empty())
      apply_override(sc, "mode", cfg.mode_override);
    if (!cfg.seeds.empty()) sc.seed = cfg.seeds.front();
  }
  if (cfg.t_end > 0.0) sc.t_end = cfg.t_end;
  for (const auto& [k, v] : cfg.overrides) apply_override(sc, k, v);
  sc.validate();
  return sc;
}

struct RunOutput {
  Scenario scenario;
  SimulationResult sim;
  RunSummary summary;
  double wall_seconds = 0.0;
};

/// Initialize from power flow, run the full horizon, summarize.
inline RunOutput run_scenario(const Scenario& sc) {
  RunOutput out;
  out.scenario = sc;
  const auto t0 = std::chrono::steady_clock::now();
  GridSystem sys(sc.model, sc.mode, sc.control, sc.seed);
  const PowerFlowResult pf = sys.initialize();
  if (log_level() >= 2)
    std::cerr << "power flow converged in " << pf.iterations
              << " iterations, mismatch " << pf.max_mismatch << "\n";
  out.sim = simulate(sys, sc.events, sc.control, sc.t_end);
  out.summary = summarize(out.sim.series, out.sim.switches, sc, &out.sim);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

inline void write_run_outputs(const RunOutput& out, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream f(dir + "/timeseries.csv");
    out.sim.series.to_csv(f);
  }
  {
    std::ofstream f(dir + "/switches.csv");
    switch_log_to_csv(out.sim.switches, f);
  }
  {
    std::ofstream f(dir + "/summary.json");
    f << summary_to_json(out.summary).dump(2) << "\n";
  }
  {
    std::ofstream f(dir + "/summary.txt");
    f << summary_to_text(out.summary);
  }
  {
    // run metadata lives here and only here, so the data files stay
    // byte-reproducible
    nlohmann::ordered_json manifest;
    const auto now = std::chrono::system_clock::now();
    manifest["wall_seconds"] = out.wall_seconds;
    manifest["completed_unix_time"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            now.time_since_epoch())
            .count();
    manifest["scenario_name"] = out.scenario.name;
    manifest["seed"] = out.scenario.seed;
    std::ofstream f(dir + "/manifest.json");
    f << manifest.dump(2) << "\n";
  }
  {
    std::ofstream f(dir + "/scenario.json");
    f << serialize_scenario(out.scenario);
  }
}

/// Run a config end to end. Returns 0 on success, 2 for scenario problems,
/// 3 for numerical failure.
inline int cmd_run(const RunConfig& cfg, std::ostream& os = std::cout) {
  std::vector<Scenario> runs;
  try {
    Scenario base = build_scenario(cfg);
    if (cfg.seeds.size() > 1) {
      for (std::uint64_t s : cfg.seeds) {
        RunConfig one = cfg;
        one.seeds = {s};
        runs.push_back(build_scenario(one));
      }
    } else {
      runs.push_back(base);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  const bool sweep = runs.size() > 1;
  std::vector<RunOutput> outputs(runs.size());
  try {
    if (sweep && cfg.jobs > 1) {
      std::vector<std::future<RunOutput>> futs;
      futs.reserve(runs.size());
      // bounded fan-out: at most `jobs` scenarios in flight
      size_t next = 0;
      std::vector<std::pair<size_t, std::future<RunOutput>>> inflight;
      while (next < runs.size() || !inflight.empty()) {
        while (next < runs.size() &&
               inflight.size() < static_cast<size_t>(cfg.jobs)) {
          const size_t i = next++;
          inflight.emplace_back(i, std::async(std::launch::async, [&runs, i] {
                                  return run_scenario(runs[i]);
                                }));
        }
        outputs[inflight.front().first] = inflight.front().second.get();
        inflight.erase(inflight.begin());
      }
    } else {
      for (size_t i = 0; i < runs.size(); ++i) outputs[i] = run_scenario(runs[i]);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  int rc = 0;
  for (size_t i = 0; i < outputs.size(); ++i) {
    const std::string dir =
        sweep ? cfg.out_dir + "/seed_" + std::to_string(runs[i].seed)
              : cfg.out_dir;
    write_run_outputs(outputs[i], dir);
    if (log_level() >= 1) os << summary_to_text(outputs[i].summary);
    if (!outputs[i].sim.success) {
      std::cerr << "numerical failure: " << outputs[i].sim.failure << "\n";
      rc = 3;
    }
  }
  return rc;
}

/// Side-by-side comparison of two finished runs from their summary files.
inline int cmd_compare(const std::string& dir_a, const std::string& dir_b,
                       std::ostream& os = std::cout) {
  const auto read = [](const std::string& dir, RunSummary& s) {
    std::ifstream f(dir + "/summary.json");
    if (!f) return false;
    nlohmann::ordered_json j;
    try {
      f >> j;
    } catch (...) {
      return false;
    }
    s = summary_from_json(j);
    return true;
  };
  RunSummary a, b;
  if (!read(dir_a, a)) {
    std::cerr << "error: no readable summary in " << dir_a << "\n";
    return 2;
  }
  if (!read(dir_b, b)) {
    std::cerr << "error: no readable summary in " << dir_b << "\n";
    return 2;
  }
  if (a.scenario_fingerprint != b.scenario_fingerprint)
    os << "WARNING: runs come from different scenarios (" << a.scenario_name
       << " vs " << b.scenario_name << ")\n";
  const auto row = [&](const char* name, double va, double vb) {
    os << "  " << name << ": " << va << " vs " << vb << "  (delta "
       << vb - va << ")\n";
  };
  os << "comparison: " << dir_a << " vs " << dir_b << "\n";
  row("freq_nadir   ", a.freq_nadir, b.freq_nadir);
  row("freq_zenith  ", a.freq_zenith, b.freq_zenith);
  row("|1 - zenith| ", std::abs(1.0 - a.freq_zenith),
      std::abs(1.0 - b.freq_zenith));
  row("max_rocof    ", a.max_rocof, b.max_rocof);
  if (a.settled && b.settled)
    row("settle_time  ", a.settle_time, b.settle_time);
  else
    os << "  settle_time  : " << (a.settled ? std::to_string(a.settle_time) : "none")
       << " vs " << (b.settled ? std::to_string(b.settle_time) : "none") << "\n";
  row("max_imbalance", a.max_imbalance, b.max_imbalance);
  row("switch_count ", static_cast<double>(a.switch_count),
      static_cast<double>(b.switch_count));
  os << "  cycling      : " << (a.cycling ? "yes" : "no") << " vs "
     << (b.cycling ? "yes" : "no") << "\n";
  return 0;
}

}  // namespace vswing
