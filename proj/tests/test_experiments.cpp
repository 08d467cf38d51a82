#include "doctest.h"

#include "nhmc/config.hpp"
#include "nhmc/experiments.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nhmc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nhmc_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config parsing, overrides and resolution") {
  Config c = Config::parse("# comment\nseed = 7\n\ndraws = 1, 10\nflag = true\n");
  c.set("seed", "9");
  CHECK(c.get_u64("seed", 0) == 9);
  CHECK(c.get_list("draws", {}) == std::vector<std::string>{"1", "10"});
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_double("missing", 2.5) == 2.5);
  CHECK(c.resolved_text().find("missing = 2.5") != std::string::npos);
  CHECK_NOTHROW(c.require_all_used());

  Config typo = Config::parse("sed = 1\n");
  CHECK(typo.unused_keys() == std::vector<std::string>{"sed"});
  CHECK_THROWS_AS(typo.require_all_used(), ConfigError);
  CHECK_THROWS_AS(Config::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("x = abc\n").get_double("x", 0.0), ConfigError);
}

TEST_CASE("algorithm specs") {
  const auto specs = parse_algorithms({"nhmc:10", "nex:1"});
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].tag() == "nHMC10");
  CHECK(specs[1].tag() == "nEx1");
  CHECK(specs[0].draws_per_iteration(4) == 50);
  CHECK(specs[1].draws_per_iteration(4) == 1);
  CHECK_THROWS_AS(parse_algorithms({"hmc:10"}), ConfigError);
  CHECK_THROWS_AS(parse_algorithms({"nex:0"}), ConfigError);
  CHECK_THROWS_AS(parse_algorithms({"nex"}), ConfigError);
}

TEST_CASE("dry runs write the resolved config and plan without sampling") {
  RunOptions run;
  run.out_dir = scratch("dry_potts");
  run.dry_run = true;
  const SamplingOutcome out = run_potts_experiment(Config::parse("seed = 3\nchains = 2\n"), run);
  CHECK(out.dry_run);
  CHECK(out.chains.empty());
  CHECK(fs::exists(run.out_dir / "plan.txt"));
  const std::string resolved = slurp(run.out_dir / "config.resolved");
  CHECK(resolved.find("chains = 2") != std::string::npos);
  CHECK(resolved.find("height = 8") != std::string::npos);
  CHECK_FALSE(fs::exists(run.out_dir / "summary.csv"));
  fs::remove_all(run.out_dir);
}

TEST_CASE("unknown or malformed keys are configuration errors") {
  RunOptions run;
  run.out_dir = scratch("bad_config");
  run.dry_run = true;
  CHECK_THROWS_AS(run_potts_experiment(Config::parse("heigth = 8\n"), run), ConfigError);
  CHECK_THROWS_AS(run_ergm_experiment(Config::parse("graph = random\nmap_preconditioner = newton\n"), run),
                  ConfigError);
  CHECK_THROWS_AS(run_ergm_experiment(Config::parse("graph = random\nauxiliary_start = sideways\n"), run),
                  ConfigError);
  CHECK_THROWS_AS(run_ratio_study(Config::parse("epsilon = fast\n"), run), ConfigError);
  fs::remove_all(run.out_dir);
}

TEST_CASE("ERGM mode-search starts") {
  RunOptions run;
  run.out_dir = scratch("ergm_start");
  run.dry_run = true;
  const std::string base = "graph = random\nnodes = 5\nprior = gaussian\n";
  CHECK_NOTHROW(run_ergm_experiment(Config::parse(base + "map_start = density\n"), run));
  CHECK_NOTHROW(run_ergm_experiment(Config::parse(base + "map_start = -0.5, 0.1\n"), run));
  CHECK_THROWS_AS(run_ergm_experiment(Config::parse(base + "map_start = 1, 2, 3\n"), run), ConfigError);
  fs::remove_all(run.out_dir);
}
