#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "vswing/runner.hpp"

namespace fs = std::filesystem;

namespace {

int run_cmd(const std::string& args) {
  const std::string cmd = std::string(VSWING_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("cli_scratch") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
};

}  // namespace

TEST_CASE("cli run writes the expected files deterministically") {
  TempDir tmp("run_basic");
  const std::string out1 = (tmp.path / "a").string();
  const std::string out2 = (tmp.path / "b").string();
  const std::string args =
      "run --builtin wscc9-sdd --dd-count 300 --seed 7 --t-end 6 -o ";
  REQUIRE(run_cmd(args + out1 + " > /dev/null") == 0);
  REQUIRE(run_cmd(args + out2 + " > /dev/null") == 0);
  for (const char* f :
       {"timeseries.csv", "switches.csv", "summary.json", "summary.txt",
        "manifest.json", "scenario.json"})
    CHECK(fs::exists(fs::path(out1) / f));
  // reruns with identical inputs are byte-identical in the data files
  CHECK(slurp(fs::path(out1) / "timeseries.csv") ==
        slurp(fs::path(out2) / "timeseries.csv"));
  CHECK(slurp(fs::path(out1) / "switches.csv") ==
        slurp(fs::path(out2) / "switches.csv"));
  CHECK(slurp(fs::path(out1) / "summary.json") ==
        slurp(fs::path(out2) / "summary.json"));
}

TEST_CASE("cli run without devices completes and flags the drift") {
  TempDir tmp("run_degenerate");
  const std::string out = (tmp.path / "r").string();
  REQUIRE(run_cmd("run --builtin wscc9-sdd --dd-count 0 --t-end 20 -o " + out +
                  " > /dev/null") == 0);
  const auto j = nlohmann::json::parse(slurp(fs::path(out) / "summary.json"));
  CHECK(j.at("freq_drift").get<bool>());
  CHECK_FALSE(j.at("settled").get<bool>());
}

TEST_CASE("cli rejects bad invocations") {
  CHECK(run_cmd("run --builtin nope -o cli_scratch/x 2> /dev/null") == 2);
  CHECK(run_cmd("run 2> /dev/null") == 2);  // no scenario at all
  CHECK(run_cmd("run --builtin wscc9-sdd --unknown-flag 2> /dev/null") != 0);
  CHECK(run_cmd("frobnicate 2> /dev/null") != 0);
  CHECK(run_cmd("--help > /dev/null") == 0);
  CHECK(run_cmd("run --help > /dev/null") == 0);
}

TEST_CASE("cli scenario file round trip and overrides") {
  TempDir tmp("run_file");
  const std::string file = (tmp.path / "scenario.json").string();
  {
    std::ofstream f(file);
    f << vswing::serialize_scenario(vswing::wscc9_builtin(vswing::Mode::SDD, 200, 3));
  }
  const std::string out = (tmp.path / "r").string();
  REQUIRE(run_cmd("run --scenario " + file +
                  " --t-end 4 --set dd.m=4 --set control.sample_dt=0.02 -o " +
                  out + " > /dev/null") == 0);
  CHECK(fs::exists(fs::path(out) / "timeseries.csv"));
  // --dd-count is builtin-only
  CHECK(run_cmd("run --scenario " + file + " --dd-count 5 2> /dev/null") == 2);
}

TEST_CASE("cli compare on identical and missing runs") {
  TempDir tmp("compare");
  const std::string out = (tmp.path / "r").string();
  REQUIRE(run_cmd("run --builtin wscc9-sdd --dd-count 200 --t-end 4 -o " + out +
                  " > /dev/null") == 0);
  const std::string report = (tmp.path / "report.txt").string();
  REQUIRE(run_cmd("compare " + out + " " + out + " > " + report) == 0);
  const std::string text = slurp(report);
  CHECK(text.find("(delta 0)") != std::string::npos);
  CHECK(text.find("WARNING") == std::string::npos);
  CHECK(run_cmd("compare " + out + " cli_scratch/nowhere 2> /dev/null") == 2);
}

TEST_CASE("cli seed sweep writes one directory per seed") {
  TempDir tmp("sweep");
  const std::string out = (tmp.path / "s").string();
  REQUIRE(run_cmd(
              "run --builtin wscc9-sdd --dd-count 120 --t-end 3 --seed 1 "
              "--seed 2 --seed 3 --jobs 3 -o " +
              out + " > /dev/null") == 0);
  for (int s = 1; s <= 3; ++s)
    CHECK(fs::exists(fs::path(out) / ("seed_" + std::to_string(s)) /
                     "summary.json"));
}

TEST_CASE("runner api mirrors the cli behavior") {
  vswing::RunConfig cfg;
  cfg.builtin = "wscc9-cdd";
  cfg.dd_count = 100;
  cfg.t_end = 3.0;
  const vswing::Scenario sc = vswing::build_scenario(cfg);
  CHECK(sc.mode == vswing::Mode::CDD);
  CHECK(sc.t_end == 3.0);
  const vswing::RunOutput out = vswing::run_scenario(sc);
  CHECK(out.sim.success);
  CHECK(out.summary.run_ok);
}
