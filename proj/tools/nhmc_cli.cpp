#include "nhmc/config.hpp"
#include "nhmc/experiments.hpp"
#include "nhmc/parallel.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

struct Common {
  std::string config_path;
  std::string seed;
  std::string out;
  std::size_t workers = 0;
  bool dry_run = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& common, const std::string& default_out) {
  common.out = default_out;
  cmd->add_option("--config", common.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "master seed (overrides the config)");
  cmd->add_option("--out", common.out, "output directory")->capture_default_str();
  cmd->add_option("--workers", common.workers, "worker threads for chains and draws (0 = all cores)");
  cmd->add_flag("--dry-run", common.dry_run, "resolve the config and write the plan without sampling");
  cmd->add_option("--set", common.overrides, "override a config key, as key=value (repeatable)");
}

nhmc::Config resolve(const Common& common) {
  nhmc::Config config = common.config_path.empty() ? nhmc::Config() : nhmc::Config::load(common.config_path);
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw nhmc::ConfigError("--set expects key=value, got " + kv);
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!common.seed.empty()) config.set("seed", common.seed);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy Hamiltonian Monte Carlo for doubly-intractable Gibbs random-field posteriors"};
  app.require_subcommand(1);

  Common validate_opts, ratio_opts, potts_opts, ergm_opts;
  auto* validate = app.add_subcommand("validate", "oracle and invariant self-checks");
  add_common(validate, validate_opts, "results/validate");
  auto* ratio = app.add_subcommand("ratio-study", "ISE against LFE log-ratio errors along noisy HMC paths");
  add_common(ratio, ratio_opts, "results/ratio-study");
  auto* potts = app.add_subcommand("potts", "Potts posterior experiment");
  add_common(potts, potts_opts, "results/potts");
  auto* ergm = app.add_subcommand("ergm", "ERGM posterior experiment");
  add_common(ergm, ergm_opts, "results/ergm");

  CLI11_PARSE(app, argc, argv);

  try {
    const Common& common = validate->parsed()  ? validate_opts
                           : ratio->parsed()   ? ratio_opts
                           : potts->parsed()   ? potts_opts
                                               : ergm_opts;
    nhmc::set_worker_count(common.workers);
    const nhmc::Config config = resolve(common);
    nhmc::RunOptions run;
    run.out_dir = common.out;
    run.dry_run = common.dry_run;
    run.log = &std::cerr;

    if (validate->parsed()) {
      const auto outcome = nhmc::run_validate(config, run);
      if (!outcome.passed) {
        for (const auto& check : outcome.checks) {
          if (!check.passed) std::cerr << "failed check: " << check.name << "\n";
        }
        return 1;
      }
    } else if (ratio->parsed()) {
      const auto outcome = nhmc::run_ratio_study(config, run);
      for (const auto& m : outcome.mse) {
        std::cout << "N=" << m.draws << "  MSE(ISE)=" << m.ise << "  MSE(LFE)=" << m.lfe
                  << "  rank corr(|ISE err|, distance)=" << m.ise_rank_correlation << "\n";
      }
    } else if (potts->parsed()) {
      nhmc::run_potts_experiment(config, run);
    } else {
      nhmc::run_ergm_experiment(config, run);
    }
    std::cerr << "artifacts in " << run.out_dir.string() << "\n";
  } catch (const nhmc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
