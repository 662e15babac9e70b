#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "vswing/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"vswing - grid simulator with switched-device virtual inertia"};
  app.require_subcommand(1);

  vswing::RunConfig cfg;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds;

  auto* run = app.add_subcommand("run", "simulate a scenario");
  auto* opt_builtin =
      run->add_option("--builtin", cfg.builtin,
                      "built-in scenario (wscc9-sdd, wscc9-cdd)");
  auto* opt_file =
      run->add_option("--scenario", cfg.scenario_path, "scenario file");
  opt_builtin->excludes(opt_file);
  run->add_option("--seed", seeds,
                  "run seed; repeat for a sweep over several seeds");
  run->add_option("--dd-count", cfg.dd_count,
                  "device count for built-in scenarios");
  run->add_option("--mode", cfg.mode_override, "SDD or CDD")
      ->check(CLI::IsMember({"SDD", "CDD"}));
  run->add_option("--t-end", cfg.t_end, "simulation horizon (s)");
  run->add_option("--set", sets,
                  "scenario override key=value (repeatable); keys like "
                  "dd.m, dd.r, control.h_step, epsilon, t_end");
  run->add_option("-o,--out", cfg.out_dir, "output directory");
  run->add_option("--jobs", cfg.jobs, "concurrent runs in a seed sweep")
      ->check(CLI::PositiveNumber);

  std::string dir_a, dir_b;
  auto* cmp = app.add_subcommand("compare", "compare two finished runs");
  cmp->add_option("run_a", dir_a, "first run directory")->required();
  cmp->add_option("run_b", dir_b, "second run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      cfg.seeds = seeds;
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
          std::cerr << "error: --set expects key=value, got \"" << s << "\"\n";
          return 2;
        }
        cfg.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
      }
      return vswing::cmd_run(cfg);
    }
    return vswing::cmd_compare(dir_a, dir_b);
  } catch (const vswing::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
