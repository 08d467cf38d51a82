#include "nhmc/experiments.hpp"

#include "nhmc/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace nhmc {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void note(const RunOptions& run, const std::string& text) {
  if (run.log) *run.log << text << std::endl;
}

/// Re-throws with the pipeline stage in the message; oracle caps become
/// configuration errors, since the config asked for an instance too large.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ResourceLimit& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(name + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
  return a;
}

void require_positive(std::size_t v, const char* key) {
  if (v == 0) throw ConfigError(std::string("key '") + key + "' must be positive");
}

Vector require_length(Vector v, std::size_t d, const char* key) {
  if (static_cast<std::size_t>(v.size()) != d) {
    throw ConfigError(std::string("key '") + key + "' needs " + std::to_string(d) + " values");
  }
  return v;
}

Prior box_prior(const Vector& lower, const Vector& upper) {
  if (!(lower.array() < upper.array()).all()) throw ConfigError("prior box is degenerate");
  return Prior::box(lower, upper);
}

Vector default_potts_lower(std::size_t d) {
  Vector v = Vector::Constant(static_cast<Eigen::Index>(d), -0.5);
  v[static_cast<Eigen::Index>(d) - 1] = 0.0;
  return v;
}

Vector default_potts_upper(std::size_t d) {
  Vector v = Vector::Constant(static_cast<Eigen::Index>(d), 0.5);
  v[static_cast<Eigen::Index>(d) - 1] = 1.0;
  return v;
}

RuppertPolyakOptions rp_options(const Config& c) {
  RuppertPolyakOptions o;
  o.a0 = c.get_double("map_a0", o.a0);
  o.exponent = c.get_double("map_exponent", o.exponent);
  o.tolerance = c.get_double("map_tolerance", o.tolerance);
  o.max_iterations = c.get_size("map_max_iterations", o.max_iterations);
  return o;
}

// ---------------------------------------------------------------------------
// Shared chain pipeline

struct ChainPlan {
  std::string experiment;
  std::vector<AlgorithmSpec> algorithms;
  std::size_t chains = 1;
  std::size_t burn_in = 0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  DualAveragingOptions adaptation;
  double exchange_scale = 1.0;
};

struct ChainPlanKeys {
  std::string algorithms;
  std::size_t chains, burn_in, iterations;
};

ChainPlan read_chain_plan(const Config& c, const std::string& experiment, const ChainPlanKeys& defaults) {
  ChainPlan p;
  p.experiment = experiment;
  p.seed = c.get_u64("seed", 1);
  std::vector<std::string> fallback;
  {
    std::string item;
    for (char ch : defaults.algorithms + ",") {
      if (ch == ',') {
        fallback.push_back(item);
        item.clear();
      } else {
        item += ch;
      }
    }
  }
  p.algorithms = parse_algorithms(c.get_list("algorithms", fallback));
  p.chains = c.get_size("chains", defaults.chains);
  p.burn_in = c.get_size("burn_in", defaults.burn_in);
  p.iterations = c.get_size("iterations", defaults.iterations);
  p.adaptation.target = c.get_double("target_accept", 0.65);
  p.exchange_scale = c.get_double("exchange_scale", 1.0);
  require_positive(p.chains, "chains");
  require_positive(p.iterations, "iterations");
  if (p.algorithms.empty()) throw ConfigError("no algorithms configured");
  if (!(p.adaptation.target > 0.0 && p.adaptation.target < 1.0)) throw ConfigError("target_accept must lie in (0, 1)");
  if (!(p.exchange_scale > 0.0)) throw ConfigError("exchange_scale must be positive");
  return p;
}

std::vector<ChainResult> run_chains(const ChainPlan& plan, const std::shared_ptr<const Posterior>& posterior,
                                    const MassMatrix& mass, const ParamVector& start, const GroundTruth& truth,
                                    const RunOptions& run) {
  const std::size_t d = posterior->dimension();
  const Matrix proposal = plan.exchange_scale * exchange_proposal_cov(mass, d);
  std::vector<ChainResult> results(plan.algorithms.size() * plan.chains);
  for (std::size_t a = 0; a < plan.algorithms.size(); ++a) {
    for (std::size_t k = 0; k < plan.chains; ++k) {
      ChainResult& r = results[a * plan.chains + k];
      r.algorithm = plan.algorithms[a];
      r.chain = k;
      r.seed = derive_seed({plan.seed, hash_label(plan.experiment + "/" + r.algorithm.tag()), k});
    }
  }
  note(run, "running " + std::to_string(results.size()) + " chains");
  parallel_for(results.size(), [&](std::size_t i) {
    ChainResult& r = results[i];
    if (r.algorithm.kind == AlgorithmSpec::Kind::noisy_hmc) {
      const auto normalizer = std::make_shared<const MonteCarloNormalizer>(*posterior, r.algorithm.draws);
      r.run = run_tuned_noisy_hmc(posterior, normalizer, mass, start, plan.burn_in, plan.iterations, r.seed,
                                  plan.adaptation);
      r.summary = summarize(r.run.trace, r.algorithm.label(), r.algorithm.draws, r.chain, r.run.epsilon,
                            r.run.steps, truth);
    } else {
      const ExchangeKernel kernel{posterior, proposal, r.algorithm.draws};
      r.run = run_tuned_exchange(kernel, start, plan.burn_in, plan.iterations, r.seed);
      r.summary = summarize(r.run.trace, r.algorithm.label(), r.algorithm.draws, r.chain, std::nullopt,
                            std::nullopt, truth);
    }
  });
  return results;
}

void write_chain_artifacts(const fs::path& out, const ChainPlan& plan, const std::vector<ChainResult>& results,
                           const MassMatrix& mass, const Matrix& proposal, std::size_t d) {
  std::vector<ChainSummary> rows;
  for (const auto& r : results) {
    rows.push_back(r.summary);
    const std::string stem = "chain_" + r.algorithm.tag() + "_" + std::to_string(r.chain);
    write_trace_csv(out / (stem + ".csv"), r.run.trace);
    write_trace_timing_csv(out / (stem + "_timing.csv"), r.run.trace);
    json side;
    side["algorithm"] = r.algorithm.label();
    side["draws_per_step"] = r.algorithm.draws;
    side["chain"] = r.chain;
    side["seed"] = r.seed;
    side["burn_in"] = plan.burn_in;
    side["iterations"] = plan.iterations;
    if (r.algorithm.kind == AlgorithmSpec::Kind::noisy_hmc) {
      side["kernel"] = {{"type", "noisy_hmc"},
                        {"epsilon", r.run.epsilon},
                        {"steps", r.run.steps},
                        {"target_accept", plan.adaptation.target},
                        {"mass_matrix", to_json(mass.matrix())}};
    } else {
      side["kernel"] = {{"type", "noisy_exchange"}, {"proposal_cov", to_json(proposal)}};
    }
    side["forward_draws"] = r.run.trace.draws;
    write_json(out / (stem + ".json"), side);
  }
  write_summary_csv(out / "summary.csv", rows, d);
  write_timing_csv(out / "timing.csv", rows);
}

json tuning_json(const std::vector<ChainResult>& results) {
  json chains = json::array();
  for (const auto& r : results) {
    json c;
    c["algorithm"] = r.algorithm.label();
    c["draws_per_step"] = r.algorithm.draws;
    c["chain"] = r.chain;
    if (r.algorithm.kind == AlgorithmSpec::Kind::noisy_hmc) {
      c["initial_epsilon"] = r.run.initial_epsilon;
      c["epsilon"] = r.run.epsilon;
      c["steps"] = r.run.steps;
    }
    c["burn_in_acceptance"] = acceptance_rate(r.run.burn_in);
    c["acceptance"] = r.summary.acceptance;
    chains.push_back(std::move(c));
  }
  return chains;
}

std::string plan_text(const ChainPlan& plan, std::size_t d) {
  std::string s = "planned forward draws per iteration (L = max(1, round(" +
                  format_double(integration_time(d)) + " / epsilon)) is fixed by tuning)\n";
  for (const auto& a : plan.algorithms) {
    s += a.tag() + ": ";
    if (a.kind == AlgorithmSpec::Kind::noisy_hmc) {
      s += std::to_string(a.draws) + "*(L+1) per iteration";
      for (std::size_t steps : {1, 2, 5, 10}) {
        s += "; L=" + std::to_string(steps) + " -> " +
             std::to_string(a.draws_per_iteration(steps) * (plan.burn_in + plan.iterations) * plan.chains) +
             " total";
      }
    } else {
      s += std::to_string(a.draws) + " per iteration; " +
           std::to_string(a.draws * (plan.burn_in + plan.iterations) * plan.chains) + " total";
    }
    s += "\n";
  }
  s += "chains " + std::to_string(plan.chains) + ", burn-in " + std::to_string(plan.burn_in) + ", iterations " +
       std::to_string(plan.iterations) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Potts observation

LatticeConfig potts_observation(const Config& c, const PottsModel& model, std::uint64_t seed,
                                const ParamVector& theta_true, const RunOptions& run) {
  const std::string source = c.get_string("observation", "simulate");
  if (source != "simulate") {
    LatticeConfig lattice = read_lattice(source, model.num_states());
    if (lattice.height != model.height() || lattice.width != model.width()) {
      throw ConfigError("observation " + source + " does not match height x width");
    }
    return lattice;
  }
  const std::size_t fallback_sweeps = c.get_size("observation_sweeps", 1000);
  Rng rng(derive_seed({seed, hash_label("observation")}));
  LatticeConfig lattice;
  lattice.height = model.height();
  lattice.width = model.width();
  lattice.states = model.num_states();
  try {
    lattice.sites = exact_sample_potts(model, theta_true, rng);
  } catch (const ResourceLimit&) {
    note(run, "lattice too tall for exact sampling; simulating the observation by Gibbs sweeps");
    lattice.sites = forward_sample(model, theta_true, 1, fallback_sweeps, rng).front();
  }
  return lattice;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string AlgorithmSpec::label() const { return kind == Kind::noisy_hmc ? "nHMC" : "nEx"; }

std::string AlgorithmSpec::tag() const { return label() + std::to_string(draws); }

std::size_t AlgorithmSpec::draws_per_iteration(std::size_t steps) const {
  return kind == Kind::noisy_hmc ? draws * (steps + 1) : draws;
}

std::vector<AlgorithmSpec> parse_algorithms(const std::vector<std::string>& items) {
  std::vector<AlgorithmSpec> out;
  for (const auto& item : items) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("algorithm '" + item + "': expected nhmc:N or nex:N");
    std::string name = item.substr(0, colon);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
    AlgorithmSpec spec;
    if (name == "nhmc") {
      spec.kind = AlgorithmSpec::Kind::noisy_hmc;
    } else if (name == "nex") {
      spec.kind = AlgorithmSpec::Kind::noisy_exchange;
    } else {
      throw ConfigError("algorithm '" + item + "': unknown sampler '" + name + "'");
    }
    const std::string count = item.substr(colon + 1);
    if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("algorithm '" + item + "': N must be a positive integer");
    }
    spec.draws = std::stoul(count);
    if (spec.draws == 0) throw ConfigError("algorithm '" + item + "': N must be positive");
    out.push_back(spec);
  }
  return out;
}

// ---------------------------------------------------------------------------

ValidateOutcome run_validate(const Config& c, const RunOptions& run) {
  ValidationOptions o;
  o.seed = c.get_u64("seed", 1);
  o.fault = parse_fault(c.get_string("fault", "none"));
  o.random_thetas = c.get_size("random_thetas", o.random_thetas);
  o.ratio_pairs = c.get_size("ratio_pairs", o.ratio_pairs);
  o.gradient_replications = c.get_size("gradient_replications", o.gradient_replications);
  o.gradient_draws = c.get_size("gradient_draws", o.gradient_draws);
  o.gradient_sweeps = c.get_size("gradient_sweeps", o.gradient_sweeps);
  o.hmc_iterations = c.get_size("hmc_iterations", o.hmc_iterations);
  o.degeneracy_iterations = c.get_size("degeneracy_iterations", o.degeneracy_iterations);
  o.exchange_iterations = c.get_size("exchange_iterations", o.exchange_iterations);
  o.exchange_sweeps = c.get_size("exchange_sweeps", o.exchange_sweeps);
  o.include_gradient = c.get_bool("include_gradient", o.include_gradient);
  o.include_exchange = c.get_bool("include_exchange", o.include_exchange);
  c.require_all_used();

  fs::create_directories(run.out_dir);
  write_text(run.out_dir / "config.resolved", c.resolved_text());
  ValidateOutcome out;
  if (run.dry_run) {
    write_text(run.out_dir / "plan.txt", "validation checks: recursion_vs_enumeration, ratio_unbiasedness, " +
                                             std::string(o.include_gradient ? "gradient_estimator, " : "") +
                                             "leapfrog, hmc_gaussian, noisy_hmc_degeneracy" +
                                             (o.include_exchange ? ", exchange_exactness" : "") + "\n");
    out.passed = true;
    return out;
  }
  out.checks = run_validation_suite(o);
  out.passed = std::all_of(out.checks.begin(), out.checks.end(), [](const CheckResult& r) { return r.passed; });
  for (const auto& r : out.checks) note(run, std::string(r.passed ? "PASS " : "FAIL ") + r.name + ": " + r.detail);
  write_validation_report(run.out_dir / "validate_report.json", out.checks, o);
  return out;
}

// ---------------------------------------------------------------------------

RatioStudyOutcome run_ratio_study(const Config& c, const RunOptions& run) {
  const std::uint64_t seed = c.get_u64("seed", 1);
  const std::size_t height = c.get_size("height", 10);
  const std::size_t width = c.get_size("width", 10);
  require_positive(height, "height");
  require_positive(width, "width");
  const auto model = std::make_shared<const PottsModel>(height, width, 2);
  const ParamVector theta_true = require_length(c.get_vector("theta_true", (Vector(2) << 0.0, 0.5).finished()), 2, "theta_true");
  const std::string prior_kind = c.get_string("prior", "box");
  const Vector box_lower = require_length(c.get_vector("prior_lower", default_potts_lower(2)), 2, "prior_lower");
  const Vector box_upper = require_length(c.get_vector("prior_upper", default_potts_upper(2)), 2, "prior_upper");
  if (prior_kind != "flat" && prior_kind != "box") throw ConfigError("prior must be flat or box");
  const Prior prior = prior_kind == "box" ? box_prior(box_lower, box_upper) : Prior::flat(2);
  const std::size_t sweeps = c.get_size("sweeps", 200);
  const std::size_t pairs = c.get_size("pairs", 500);
  const std::size_t chain_draws = c.get_size("chain_draws", 10);
  // auto: ε = t/steps with t from the integration-time heuristic; tuned: dual
  // averaging; otherwise a fixed ε paired with `steps`.
  const std::string epsilon_text = c.get_string("epsilon", "auto");
  const bool tuned_epsilon = epsilon_text == "tuned";
  const std::size_t burn_in = tuned_epsilon ? c.get_size("burn_in", 200) : 0;
  const std::size_t fixed_steps = tuned_epsilon ? 0 : c.get_size("steps", 20);
  const std::size_t map_draws = c.get_size("map_draws", 10);
  const std::string mass_kind = c.get_string("mass", "hessian");
  if (mass_kind != "identity" && mass_kind != "hessian") throw ConfigError("mass must be identity or hessian");
  const std::size_t mass_draws = mass_kind == "hessian" ? c.get_size("mass_draws", 500) : 1;
  const RuppertPolyakOptions rp = rp_options(c);
  DualAveragingOptions adaptation;
  if (tuned_epsilon) adaptation.target = c.get_double("target_accept", 0.65);
  std::vector<std::size_t> draw_counts;
  for (const auto& s : c.get_list("draws", {"1", "10"})) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos || std::stoul(s) == 0) {
      throw ConfigError("draws: bad count " + s);
    }
    draw_counts.push_back(std::stoul(s));
  }
  for (auto [v, k] : {std::pair{pairs, "pairs"}, {chain_draws, "chain_draws"}, {sweeps, "sweeps"},
                      {map_draws, "map_draws"}, {mass_draws, "mass_draws"}}) {
    require_positive(v, k);
  }
  std::optional<double> fixed_epsilon;
  if (!tuned_epsilon) require_positive(fixed_steps, "steps");
  if (epsilon_text == "auto") {
    fixed_epsilon = integration_time(2) / static_cast<double>(fixed_steps);
  } else if (!tuned_epsilon) {
    std::size_t used = 0;
    try {
      fixed_epsilon = std::stod(epsilon_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != epsilon_text.size()) throw ConfigError("epsilon must be auto, tuned or a number");
    if (!(*fixed_epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  }
  c.require_all_used();

  // Oracle first: refuse before any sampling if it is out of reach.
  const LogPartitionFn log_z = stage("ratio-study/oracle", [&] {
    const auto fn = exact_log_partition(*model);
    fn(theta_true);
    return fn;
  });

  fs::create_directories(run.out_dir);
  write_text(run.out_dir / "config.resolved", c.resolved_text());
  RatioStudyOutcome out;
  if (run.dry_run) {
    write_text(run.out_dir / "plan.txt",
               std::to_string(pairs) + " trajectories from nHMC(" + std::to_string(chain_draws) +
                   "); per pair and N: N draws for ISE and N*L draws for LFE\n");
    return out;
  }

  const LatticeConfig observed = stage("ratio-study/observation", [&] {
    Rng rng(derive_seed({seed, hash_label("ratio-study/observation")}));
    LatticeConfig l{height, width, 2, exact_sample_potts(*model, theta_true, rng)};
    return l;
  });
  write_lattice(run.out_dir / "observed.txt", observed);
  const auto posterior = std::make_shared<const Posterior>(Posterior::make(model, observed.sites, prior, sweeps));

  const ParamVector mode = stage("ratio-study/map", [&] {
    Rng rng(derive_seed({seed, hash_label("ratio-study/map")}));
    // The box always bounds the mode search; the prior only shapes the trajectories.
    const ParamVector start = 0.5 * (box_lower + box_upper);
    return map_search_ruppert_polyak(monte_carlo_gradient(*posterior, map_draws), box_prior(box_lower, box_upper),
                                     start, rng, rp)
        .theta;
  });
  const MassMatrix mass = stage("ratio-study/mass", [&] {
    if (mass_kind == "identity") return MassMatrix::identity(2);
    Rng rng(derive_seed({seed, hash_label("ratio-study/mass")}));
    return mass_matrix_from_mode(*posterior, mode, mass_draws, rng);
  });

  const auto normalizer = std::make_shared<const MonteCarloNormalizer>(*posterior, chain_draws);
  const std::uint64_t chain_seed = derive_seed({seed, hash_label("ratio-study/chain")});
  ParamVector theta = mode;
  if (fixed_epsilon) {
    out.epsilon = *fixed_epsilon;
    out.steps = fixed_steps;
  } else {
    const TunedChain tuned = stage("ratio-study/tuning", [&] {
      return run_tuned_noisy_hmc(posterior, normalizer, mass, mode, burn_in, 0, chain_seed, adaptation);
    });
    out.epsilon = tuned.epsilon;
    out.steps = tuned.steps;
    theta = tuned.burn_in.states.back();
  }
  note(run, "ratio study: epsilon " + format_double(out.epsilon) + ", L " + std::to_string(out.steps));

  std::vector<std::vector<ParamVector>> paths;
  stage("ratio-study/chain", [&] {
    Rng rng(derive_seed({chain_seed, hash_label("pairs")}));
    for (std::size_t p = 0; p < pairs; ++p) {
      NoisyTrajectory trajectory;
      const Transition t = noisy_hmc_iteration(*posterior, *normalizer, mass, theta, out.epsilon, out.steps, rng,
                                               &trajectory);
      std::vector<ParamVector> path;
      for (const auto& point : trajectory.points) path.push_back(point.theta);
      paths.push_back(std::move(path));
      theta = t.theta;
    }
    return 0;
  });

  out.rows.resize(pairs * draw_counts.size());
  stage("ratio-study/estimates", [&] {
    parallel_for(out.rows.size(), [&](std::size_t i) {
      const std::size_t p = i / draw_counts.size();
      const std::size_t n = draw_counts[i % draw_counts.size()];
      const auto& path = paths[p];
      Rng rng(derive_seed({seed, hash_label("ratio-study/estimates"), p, n}));
      RatioStudyRow& row = out.rows[i];
      row.pair = p;
      row.draws = n;
      row.steps = path.size() - 1;
      row.distance = (path.front() - path.back()).norm();
      row.exact = exact_log_ratio(log_z, path.front(), path.back());
      const AuxiliaryBatch end_batch = draw_batch(*posterior, path.back(), n, rng);
      row.abs_err_ise = std::abs(ise_log_ratio(path.front(), path.back(), end_batch).log_value - row.exact);
      std::vector<AuxiliaryBatch> batches;
      for (std::size_t l = 1; l < path.size(); ++l) batches.push_back(draw_batch(*posterior, path[l], n, rng));
      row.abs_err_lfe = std::abs(lfe_log_ratio(path, batches).log_value - row.exact);
    });
    return 0;
  });

  std::ofstream csv(run.out_dir / "ratio_study.csv");
  csv << "pair,norm_theta_diff,L,N,exact_log_ratio,abs_err_ise,abs_err_lfe\n";
  for (const auto& r : out.rows) {
    csv << r.pair << ',' << format_double(r.distance) << ',' << r.steps << ',' << r.draws << ','
        << format_double(r.exact) << ',' << format_double(r.abs_err_ise) << ',' << format_double(r.abs_err_lfe)
        << '\n';
  }
  std::ofstream mse_csv(run.out_dir / "ratio_mse.csv");
  mse_csv << "N,mse_ise,mse_lfe,rank_corr_ise_distance\n";
  for (std::size_t n : draw_counts) {
    RatioStudyMse m;
    m.draws = n;
    std::vector<double> dist, err;
    for (const auto& r : out.rows) {
      if (r.draws != n) continue;
      m.ise += r.abs_err_ise * r.abs_err_ise;
      m.lfe += r.abs_err_lfe * r.abs_err_lfe;
      dist.push_back(r.distance);
      err.push_back(r.abs_err_ise);
    }
    m.ise /= static_cast<double>(pairs);
    m.lfe /= static_cast<double>(pairs);
    m.ise_rank_correlation = pairs >= 2 ? spearman_correlation(dist, err) : std::nan("");
    out.mse.push_back(m);
    const std::string rho = std::isnan(m.ise_rank_correlation) ? "" : format_double(m.ise_rank_correlation);
    mse_csv << n << ',' << format_double(m.ise) << ',' << format_double(m.lfe) << ',' << rho << '\n';
  }

  json tuning;
  tuning["mode"] = to_json(mode);
  tuning["mass_matrix"] = to_json(mass.matrix());
  tuning["epsilon"] = out.epsilon;
  tuning["steps"] = out.steps;
  tuning["epsilon_source"] = epsilon_text == "auto" ? "integration_time" : tuned_epsilon ? "dual_averaging" : "config";
  write_json(run.out_dir / "tuning.json", tuning);
  return out;
}

// ---------------------------------------------------------------------------

SamplingOutcome run_potts_experiment(const Config& c, const RunOptions& run) {
  const std::size_t height = c.get_size("height", 8);
  const std::size_t width = c.get_size("width", 8);
  const std::size_t states = c.get_size("states", 2);
  require_positive(height, "height");
  require_positive(width, "width");
  if (states < 2 || states > 255) throw ConfigError("states must lie in 2..255");
  const auto model = std::make_shared<const PottsModel>(height, width, static_cast<int>(states));
  const std::size_t d = model->dimension();

  Vector theta_default = Vector::Zero(static_cast<Eigen::Index>(d));
  theta_default[static_cast<Eigen::Index>(d) - 1] = 0.5;
  const ParamVector theta_true = require_length(c.get_vector("theta_true", theta_default), d, "theta_true");
  const Prior prior = box_prior(require_length(c.get_vector("prior_lower", default_potts_lower(d)), d, "prior_lower"),
                                require_length(c.get_vector("prior_upper", default_potts_upper(d)), d, "prior_upper"));
  const std::size_t sweeps = c.get_size("sweeps", 200);
  require_positive(sweeps, "sweeps");
  const ChainPlan plan = read_chain_plan(c, "potts", {"nhmc:1,nhmc:10,nex:1,nex:10", 4, 500, 1500});
  const std::size_t map_draws = c.get_size("map_draws", 10);
  const std::size_t mass_draws = c.get_size("mass_draws", 500);
  require_positive(map_draws, "map_draws");
  require_positive(mass_draws, "mass_draws");
  const RuppertPolyakOptions rp = rp_options(c);
  const ParamVector map_start =
      require_length(c.get_vector("map_start", 0.5 * (prior.lower() + prior.upper())), d, "map_start");
  const bool ground_truth = c.get_bool("ground_truth", true);
  const std::size_t resolution = c.get_size("grid_resolution", 200);
  const double kl_bin = c.get_double("kl_bin", 0.01);
  const bool write_grid = c.get_bool("write_grid", false);
  const std::string observation_source = c.get_string("observation", "simulate");
  if (observation_source == "simulate") c.get_size("observation_sweeps", 1000);

  // Resource guard before any sampling.
  std::optional<LogPartitionFn> log_z;
  if (ground_truth) {
    if (d != 2) throw ConfigError("potts/ground-truth: the posterior grid needs two parameters; set ground_truth = false");
    log_z = stage("potts/ground-truth", [&] {
      auto fn = exact_log_partition(*model);
      fn(theta_true);
      return fn;
    });
  }
  c.require_all_used();

  fs::create_directories(run.out_dir);
  write_text(run.out_dir / "config.resolved", c.resolved_text());
  SamplingOutcome out;
  if (run.dry_run) {
    out.dry_run = true;
    write_text(run.out_dir / "plan.txt", plan_text(plan, d));
    return out;
  }

  const LatticeConfig observed =
      stage("potts/observation", [&] { return potts_observation(c, *model, plan.seed, theta_true, run); });
  write_lattice(run.out_dir / "observed.txt", observed);
  const auto posterior = std::make_shared<const Posterior>(Posterior::make(model, observed.sites, prior, sweeps));
  out.observed_stats = posterior->observed_stats;

  GroundTruth truth;
  if (log_z) {
    note(run, "computing the exact posterior grid");
    out.grid = stage("potts/ground-truth",
                     [&] { return exact_posterior_grid(*log_z, posterior->observed_stats, prior, resolution); });
    out.reference_mean = out.grid->mean();
    truth.posterior_mean = out.reference_mean;
    truth.grid = &*out.grid;
    truth.kl_bin_size = kl_bin;
    if (write_grid) out.grid->write_csv(run.out_dir / "posterior_grid.csv");
  }

  note(run, "searching for the posterior mode");
  const MapSearchResult map = stage("potts/map", [&] {
    Rng rng(derive_seed({plan.seed, hash_label("potts/map")}));
    return map_search_ruppert_polyak(monte_carlo_gradient(*posterior, map_draws), prior, map_start, rng, rp);
  });
  out.mode = map.theta;
  out.mass = stage("potts/mass", [&] {
    Rng rng(derive_seed({plan.seed, hash_label("potts/mass")}));
    return mass_matrix_from_mode(*posterior, out.mode, mass_draws, rng);
  });

  out.chains = stage("potts/chains", [&] { return run_chains(plan, posterior, *out.mass, out.mode, truth, run); });
  const Matrix proposal = plan.exchange_scale * exchange_proposal_cov(*out.mass, d);
  write_chain_artifacts(run.out_dir, plan, out.chains, *out.mass, proposal, d);

  json tuning;
  tuning["observed_stats"] = to_json(out.observed_stats);
  tuning["map"] = {{"method", "ruppert_polyak"},
                   {"theta", to_json(map.theta)},
                   {"iterations", map.iterations},
                   {"converged", map.converged}};
  tuning["mass_matrix"] = to_json(out.mass->matrix());
  tuning["exchange_proposal_cov"] = to_json(proposal);
  if (out.reference_mean) tuning["exact_posterior_mean"] = to_json(*out.reference_mean);
  tuning["chains"] = tuning_json(out.chains);
  write_json(run.out_dir / "tuning.json", tuning);
  return out;
}

// ---------------------------------------------------------------------------

SamplingOutcome run_ergm_experiment(const Config& c, const RunOptions& run) {
  const std::string graph_source = c.get_string("graph", "data/karate.edgelist");
  GraphConfig graph;
  std::shared_ptr<const ErgmModel> model;
  Vector expected_default;
  if (graph_source == "random") {
    const std::size_t nodes = c.get_size("nodes", 5);
    const std::uint64_t graph_seed = c.get_u64("graph_seed", 20);
    if (nodes < 2) throw ConfigError("nodes must be at least 2");
    model = std::make_shared<const ErgmModel>(nodes);
    Rng rng(derive_seed({graph_seed, hash_label("tiny-ergm")}));
    graph = GraphConfig::from_dyads(*model, model->random_configuration(rng));
  } else {
    graph = stage("ergm/graph", [&] { return read_edge_list(graph_source); });
    model = std::make_shared<const ErgmModel>(graph.nodes);
    if (fs::path(graph_source).stem() == "karate") expected_default = (Vector(2) << 78.0, 528.0).finished();
  }
  const Configuration observed = graph.to_dyads(*model);
  const SuffStats stats = model->suff_stats(observed);
  const Vector expected = c.get_vector("expected_stats", expected_default);
  if (expected.size() > 0) {
    if (expected.size() != 2 || expected != stats) {
      throw ConfigError("ergm/graph: statistics (" + format_vector(stats) + ") differ from expected_stats (" +
                        format_vector(expected) + ")");
    }
  }

  const std::string prior_kind = c.get_string("prior", "flat");
  Prior prior = Prior::flat(2);
  if (prior_kind == "gaussian") {
    const Vector mean = require_length(c.get_vector("prior_mean", Vector::Zero(2)), 2, "prior_mean");
    const Vector sd = require_length(c.get_vector("prior_sd", Vector::Ones(2)), 2, "prior_sd");
    if (!(sd.array() > 0.0).all()) throw ConfigError("prior_sd must be positive");
    prior = Prior::gaussian(mean, sd.array().square().matrix().asDiagonal());
  } else if (prior_kind == "box") {
    prior = box_prior(require_length(c.get_vector("prior_lower", Vector()), 2, "prior_lower"),
                      require_length(c.get_vector("prior_upper", Vector()), 2, "prior_upper"));
  } else if (prior_kind != "flat") {
    throw ConfigError("prior must be flat, gaussian or box");
  }

  const std::size_t sweeps = c.get_size("sweeps", 100);
  require_positive(sweeps, "sweeps");
  const std::string auxiliary_start = c.get_string("auxiliary_start", "uniform");
  if (auxiliary_start != "uniform" && auxiliary_start != "observed") {
    throw ConfigError("auxiliary_start must be uniform or observed");
  }
  const ChainPlan plan = read_chain_plan(c, "ergm", {"nhmc:10,nex:1,nex:25", 1, 500, 5000});
  const std::string map_method = c.get_string("map_method", "robbins_monro");
  // map_start: "density" (Bernoulli fit, θ_2star = 0), "mple", or an explicit vector.
  ParamVector map_start;
  const std::string map_start_source = c.get_string("map_start", "density");
  if (map_start_source == "density") {
    const double density = std::clamp(stats[0] / static_cast<double>(model->site_count()), 1e-3, 1.0 - 1e-3);
    map_start = (Vector(2) << std::log(density / (1.0 - density)), 0.0).finished();
  } else if (map_start_source == "mple") {
    const PseudoLikelihoodResult mple = maximum_pseudo_likelihood(*model, observed);
    if (!mple.converged) throw ConfigError("map_start: pseudo-likelihood has no finite maximizer for this graph");
    map_start = mple.theta;
  } else {
    map_start = require_length(c.get_vector("map_start", Vector()), 2, "map_start");
  }
  const std::size_t map_draws = c.get_size("map_draws", 10);
  const std::size_t hessian_draws = c.get_size("hessian_draws", 500);
  require_positive(map_draws, "map_draws");
  require_positive(hessian_draws, "hessian_draws");
  std::size_t rm_iterations = 0;
  double rm_alpha = 0.0;
  std::string rm_preconditioner = "identity";
  double rm_max_step = std::numeric_limits<double>::infinity();
  RuppertPolyakOptions rp;
  if (map_method == "robbins_monro") {
    rm_iterations = c.get_size("map_iterations", 200);
    rm_alpha = c.get_double("map_alpha", 1.0);
    require_positive(rm_iterations, "map_iterations");
    rm_preconditioner = c.get_string("map_preconditioner", "identity");
    rm_max_step = c.get_double("map_max_step", std::numeric_limits<double>::infinity());
    if (!(rm_max_step > 0.0)) throw ConfigError("map_max_step must be positive");
    if (rm_preconditioner != "identity" && rm_preconditioner != "hessian") {
      throw ConfigError("map_preconditioner must be identity or hessian");
    }
  } else if (map_method == "ruppert_polyak") {
    rp = rp_options(c);
  } else if (map_method != "none") {
    throw ConfigError("map_method must be robbins_monro, ruppert_polyak or none");
  }

  const std::string reference = c.get_string("reference", "auto");
  const double enumeration_bits = static_cast<double>(model->site_count());
  const bool enumerable = enumeration_bits <= OracleLimits{}.max_enumeration_bits;
  const bool exact_reference = reference == "exact" || (reference == "auto" && enumerable);
  if (reference == "exact" && !enumerable) {
    throw ConfigError("ergm/reference: " + std::to_string(model->nodes()) + " nodes is beyond the enumeration cap");
  }
  std::size_t resolution = 0;
  double kl_bin = 0.0;
  std::optional<Vector> grid_lower, grid_upper;
  if (exact_reference) {
    resolution = c.get_size("grid_resolution", 300);
    kl_bin = c.get_double("kl_bin", 0.1);
    if (c.has("grid_lower") || prior.kind() != Prior::Kind::box) {
      grid_lower = require_length(c.get_vector("grid_lower", Vector::Constant(2, -6.0)), 2, "grid_lower");
      grid_upper = require_length(c.get_vector("grid_upper", Vector::Constant(2, 6.0)), 2, "grid_upper");
    } else {
      grid_lower = prior.lower();
      grid_upper = prior.upper();
    }
    if (!(grid_lower->array() < grid_upper->array()).all()) throw ConfigError("grid box is degenerate");
  }
  c.require_all_used();

  fs::create_directories(run.out_dir);
  write_text(run.out_dir / "config.resolved", c.resolved_text());
  SamplingOutcome out;
  out.observed_stats = stats;
  note(run, "graph with " + std::to_string(model->nodes()) + " nodes, statistics " + format_vector(stats));
  if (run.dry_run) {
    out.dry_run = true;
    write_text(run.out_dir / "plan.txt", plan_text(plan, 2));
    return out;
  }
  const auto posterior = std::make_shared<const Posterior>([&] {
    Posterior p = Posterior::make(model, observed, prior, sweeps);
    p.start_at_observed = auxiliary_start == "observed";
    return p;
  }());

  GroundTruth truth;
  if (exact_reference) {
    note(run, "enumerating the exact posterior");
    out.grid = stage("ergm/reference", [&] {
      const auto enumerated = std::make_shared<const EnumeratedModel>(*model);
      const LogPartitionFn log_z = [enumerated](const ParamVector& t) { return enumerated->log_z(t); };
      return exact_posterior_grid(log_z, stats, prior, *grid_lower, *grid_upper, resolution);
    });
    out.reference_mean = out.grid->mean();
    truth.grid = &*out.grid;
    truth.kl_bin_size = kl_bin;
  } else if (reference != "auto" && reference != "none") {
    if (fs::exists(reference)) {
      const CsvTable table = read_csv(reference);
      Vector sum = Vector::Zero(2);
      std::size_t n = 0;
      for (std::size_t r = 1; r < table.rows.size(); ++r) {
        sum += (Vector(2) << std::stod(table.rows[r].at(1)), std::stod(table.rows[r].at(2))).finished();
        ++n;
      }
      if (n == 0) throw ConfigError("ergm/reference: " + reference + " has no iterations");
      out.reference_mean = sum / static_cast<double>(n);
    } else if (run.log) {
      *run.log << "warning: reference trace " << reference << " not found; MSE left empty" << std::endl;
    }
  }
  truth.posterior_mean = out.reference_mean;

  MapSearchResult map;
  stage("ergm/map", [&] {
    Rng rng(derive_seed({plan.seed, hash_label("ergm/map")}));
    if (map_method == "robbins_monro") {
      GradientEstimator gradient = monte_carlo_gradient(*posterior, map_draws);
      if (rm_preconditioner == "hessian") {
        // Newton-type steps: scale by the inverse precision estimated at the start.
        const Matrix inverse = mass_matrix_from_mode(*posterior, map_start, hessian_draws, rng).inverse();
        gradient = [raw = std::move(gradient), inverse](const ParamVector& t, Rng& r) -> Vector {
          return inverse * raw(t, r);
        };
      }
      map = map_search_robbins_monro(gradient, map_start, rm_iterations, rm_alpha, rng, rm_max_step);
    } else if (map_method == "ruppert_polyak") {
      map = map_search_ruppert_polyak(monte_carlo_gradient(*posterior, map_draws), prior, map_start, rng, rp);
    } else {
      map.theta = map.last_iterate = map_start;
    }
    return 0;
  });
  out.mode = map.theta;
  note(run, "mode " + format_vector(out.mode));
  out.mass = stage("ergm/mass", [&] {
    Rng rng(derive_seed({plan.seed, hash_label("ergm/mass")}));
    return mass_matrix_from_mode(*posterior, out.mode, hessian_draws, rng);
  });

  out.chains = stage("ergm/chains", [&] { return run_chains(plan, posterior, *out.mass, out.mode, truth, run); });
  const Matrix proposal = plan.exchange_scale * exchange_proposal_cov(*out.mass, 2);
  write_chain_artifacts(run.out_dir, plan, out.chains, *out.mass, proposal, 2);

  json tuning;
  tuning["observed_stats"] = to_json(stats);
  tuning["map"] = {{"method", map_method},
                   {"start", to_json(map_start)},
                   {"start_source", map_start_source},
                   {"preconditioner", map_method == "robbins_monro" ? rm_preconditioner : std::string("none")},
                   {"theta", to_json(map.theta)},
                   {"iterations", map.iterations},
                   {"converged", map.converged}};
  tuning["mass_matrix"] = to_json(out.mass->matrix());
  tuning["exchange_proposal_cov"] = to_json(proposal);
  if (out.reference_mean) tuning["reference_mean"] = to_json(*out.reference_mean);
  tuning["chains"] = tuning_json(out.chains);
  write_json(run.out_dir / "tuning.json", tuning);
  return out;
}

}  // namespace nhmc
