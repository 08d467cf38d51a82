#pragma once

// Experiment pipelines behind the command-line driver. Each takes a resolved
// Config, writes its artifacts under an output directory and returns the
// in-memory results so callers can check them without re-reading files.

#include "nhmc/config.hpp"
#include "nhmc/diagnostics.hpp"
#include "nhmc/exact_oracle.hpp"
#include "nhmc/samplers.hpp"
#include "nhmc/tuning.hpp"
#include "nhmc/validation.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nhmc {

struct RunOptions {
  std::filesystem::path out_dir = "results";
  bool dry_run = false;
  std::ostream* log = nullptr;  // progress notes; nullptr for silence
};

/// One sampler in an experiment, written `nhmc:N` or `nex:N` in configs.
struct AlgorithmSpec {
  enum class Kind { noisy_hmc, noisy_exchange };
  Kind kind = Kind::noisy_hmc;
  std::size_t draws = 1;

  /// "nHMC" or "nEx".
  std::string label() const;
  /// label plus N, e.g. "nHMC10"; used in file names and seeds.
  std::string tag() const;
  /// Forward draws per iteration, given the trajectory length for nHMC.
  std::size_t draws_per_iteration(std::size_t steps) const;
};

std::vector<AlgorithmSpec> parse_algorithms(const std::vector<std::string>& items);

// ---------------------------------------------------------------------------

struct ValidateOutcome {
  std::vector<CheckResult> checks;
  bool passed = false;
};

/// Runs the oracle suite; writes validate_report.json.
ValidateOutcome run_validate(const Config& config, const RunOptions& run);

// ---------------------------------------------------------------------------

struct RatioStudyRow {
  std::size_t pair = 0;
  double distance = 0.0;  // ‖θ₀ − θ_L‖
  std::size_t steps = 0;
  std::size_t draws = 0;  // N
  double exact = 0.0;     // log Z(θ₀)/Z(θ_L)
  double abs_err_ise = 0.0;
  double abs_err_lfe = 0.0;
};

struct RatioStudyMse {
  std::size_t draws = 0;
  double ise = 0.0;
  double lfe = 0.0;
  double ise_rank_correlation = 0.0;  // Spearman of |error| against distance
};

struct RatioStudyOutcome {
  std::vector<RatioStudyRow> rows;
  std::vector<RatioStudyMse> mse;
  double epsilon = 0.0;
  std::size_t steps = 0;
};

/// Endpoint pairs from a noisy HMC chain on a Potts lattice; ISE and LFE errors
/// against the exact log ratio for each configured N. Writes ratio_study.csv and
/// ratio_mse.csv.
RatioStudyOutcome run_ratio_study(const Config& config, const RunOptions& run);

// ---------------------------------------------------------------------------

struct ChainResult {
  AlgorithmSpec algorithm;
  std::size_t chain = 0;
  std::uint64_t seed = 0;
  TunedChain run;
  ChainSummary summary;
};

struct SamplingOutcome {
  SuffStats observed_stats;
  ParamVector mode;
  std::optional<MassMatrix> mass;
  std::optional<PosteriorGrid> grid;
  std::optional<Vector> reference_mean;
  std::vector<ChainResult> chains;
  bool dry_run = false;
};

/// Potts posterior: simulate or load the observation, MAP, mass matrix, tuned
/// chains for each algorithm, exact ground truth when the oracle allows it.
SamplingOutcome run_potts_experiment(const Config& config, const RunOptions& run);

/// ERGM posterior: load or generate the graph, mode search, mass matrix, chains,
/// reference by enumeration or from a long-run trace.
SamplingOutcome run_ergm_experiment(const Config& config, const RunOptions& run);

}  // namespace nhmc
