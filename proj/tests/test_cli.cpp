/*
   Copyright 2026 The mdplab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mdplab/cli.hpp"
#include "mdplab/csv.hpp"

using namespace mdplab::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mdplab_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "mdplab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

const char* kSmallSimulate = R"({
  "seed": 5,
  "experiment": {"n_particles": 20, "T": 0.1, "dt": 0.01, "track": [0, 3]}
})";

}  // namespace

TEST_CASE("defaults are filled in") {
  const auto cfg = parse_config("{}", "mdp-tail");
  CHECK(cfg.model["name"] == "mean_field_ou");
  CHECK(cfg.model["theta"] == 1.0);
  CHECK(cfg.model["eta"] == 0.5);
  CHECK(cfg.experiment["name"] == "mdp-tail");
  CHECK(cfg.experiment["kappa"] == 0.75);
  CHECK(cfg.seed == 0);
  CHECK_FALSE(cfg.threads.has_value());
  CHECK(provenance(cfg).contains("experiment"));
  CHECK_FALSE(provenance(cfg).contains("threads"));
}

TEST_CASE("unknown keys are rejected by name") {
  try {
    parse_config(R"({"experiment": {"kapa": 0.75}})", "mdp-tail");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("experiment.kapa") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"sed": 1})", "check"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"name": "mean_field_ou", "thta": 1}})", "check"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json", "check"), ConfigError);
  CHECK_THROWS_AS(parse_config("{}", "frobnicate"), ConfigError);
}

TEST_CASE("invalid parameters fail before simulation") {
  const auto bad_kappa = parse_config(R"({"experiment": {"kappa": 0.5}})", "mdp-tail");
  try {
    plan(bad_kappa);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("kappa") != std::string::npos);
  }
  CHECK_THROWS_AS(plan(parse_config(R"({"model": {"theta": 0.2, "eta": 0.5}})", "check")), ConfigError);
  CHECK_THROWS_AS(plan(parse_config(R"({"experiment": {"dt": 0.03}})", "simulate")), ConfigError);
  CHECK_THROWS_AS(plan(parse_config(R"({"experiment": {"observable": "cube"}})", "variance")), ConfigError);
  CHECK_THROWS_AS(plan(parse_config(R"({"experiment": {"kind": "cosh"}})", "probe")), ConfigError);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  write(dir / "bad.json", R"({"experiment": {"kappa": 0.5}})");
  std::string err;
  CHECK(run({"mdp-tail", "--config", (dir / "bad.json").string(), "--out", dir.string()}, nullptr, &err) == kExitConfig);
  CHECK(err.find("kappa") != std::string::npos);
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
  CHECK(run({"simulate", "--config", (dir / "missing.json").string()}) == kExitConfig);
  CHECK(run({"simulate"}) == kExitConfig);
  CHECK(run({"--version"}) == kExitOk);

  write(dir / "ok.json", kSmallSimulate);
  std::string out;
  CHECK(run({"simulate", "--config", (dir / "ok.json").string(), "--out", (dir / "o").string()}, &out) == kExitOk);
  CHECK(out.find("simulate_paths.csv (22 rows)") != std::string::npos);
  CHECK(fs::exists(dir / "o" / "simulate_final.csv.meta.json"));
}

TEST_CASE("installed binary reports exit status") {
  const char* bin = std::getenv("MDPLAB_CLI");
  if (bin == nullptr) return;
  const auto dir = scratch("binary");
  write(dir / "bad.json", R"({"experiment": {"kapa": 0.75}})");
  const std::string cmd = std::string(bin) + " mdp-tail --config " + (dir / "bad.json").string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == kExitConfig);
}

TEST_CASE("sidecar reproduces the output") {
  const auto dir = scratch("sidecar");
  write(dir / "run.json", kSmallSimulate);
  REQUIRE(run({"simulate", "--config", (dir / "run.json").string(), "--out", (dir / "a").string()}) == kExitOk);
  const auto sidecar = dir / "a" / "simulate_paths.csv.meta.json";
  REQUIRE(run({"simulate", "--config", sidecar.string(), "--out", (dir / "b").string(), "--threads", "3"}) == kExitOk);
  for (const char* name : {"simulate_paths.csv", "simulate_final.csv", "simulate_paths.csv.meta.json"}) {
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  CHECK_THROWS_AS(parse_config(slurp(sidecar), "invariant"), ConfigError);
}

TEST_CASE("seed flag overrides the config") {
  const auto dir = scratch("seed");
  write(dir / "run.json", kSmallSimulate);
  REQUIRE(run({"simulate", "--config", (dir / "run.json").string(), "--out", (dir / "a").string(), "--seed", "6"}) == kExitOk);
  REQUIRE(run({"simulate", "--config", (dir / "run.json").string(), "--out", (dir / "b").string()}) == kExitOk);
  CHECK(slurp(dir / "a" / "simulate_final.csv") != slurp(dir / "b" / "simulate_final.csv"));
  CHECK(slurp(dir / "a" / "simulate_final.csv.meta.json").find("\"seed\": 6") != std::string::npos);
}

TEST_CASE("failed writes leave no partial outputs") {
  const auto dir = scratch("unwritable");
  write(dir / "run.json", kSmallSimulate);
  const auto out = dir / "out";
  fs::create_directories(out / "simulate_final.csv");  // blocks the final rename
  std::string err;
  CHECK(run({"simulate", "--config", (dir / "run.json").string(), "--out", out.string()}, nullptr, &err) == kExitRuntime);
  CHECK(!err.empty());
  std::vector<std::string> left;
  for (const auto& e : fs::directory_iterator(out)) left.push_back(e.path().filename().string());
  REQUIRE(left.size() == 1);
  CHECK(left[0] == "simulate_final.csv");
  CHECK(fs::is_directory(out / "simulate_final.csv"));
}

TEST_CASE("thread count parsing") {
  CHECK_FALSE(parse_threads("auto").has_value());
  CHECK(parse_threads("4").value() == 4);
  CHECK_THROWS_AS(parse_threads("0"), ConfigError);
  CHECK_THROWS_AS(parse_threads("-2"), ConfigError);
  CHECK_THROWS_AS(parse_threads("3x"), ConfigError);
  CHECK(parse_config(R"({"threads": 2})", "check").threads.value() == 2);
  CHECK_FALSE(parse_config(R"({"threads": "auto"})", "check").threads.has_value());
  CHECK_THROWS_AS(parse_config(R"({"threads": 0})", "check"), ConfigError);
}

TEST_CASE("numbers round trip through the CSV formatter") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1e16 + 2.0,
                   std::numeric_limits<double>::denorm_min()}) {
    CHECK(std::strtod(mdplab::format_number(v).c_str(), nullptr) == v);
  }
  CHECK(mdplab::format_number(2.0) == "2");
}
