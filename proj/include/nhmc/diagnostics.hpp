#pragma once

// Chain-quality summaries: ESS, acceptance, move lengths, accuracy against
// ground truth, and CSV emission.

#include "nhmc/core.hpp"
#include "nhmc/exact_oracle.hpp"
#include "nhmc/samplers.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nhmc {

struct EssResult {
  double ess = 0.0;
  /// Number of autocovariance lags summed (always even).
  std::size_t truncation_lag = 0;
  /// Constant series: ESS reported as 1.
  bool degenerate = false;
};

/// n / (1 + 2 Σ ρ_k) with the initial monotone positive sequence truncation on
/// paired autocovariances, clamped to (0, n]. Requires at least 10 values.
EssResult effective_sample_size(std::span<const double> series);

/// Column j of the states (after dropping `skip` leading states).
std::vector<double> marginal(const ChainTrace& trace, std::size_t coordinate, std::size_t skip = 0);

/// |Δθ_j| over accepted iterations, one series per coordinate.
std::vector<std::vector<double>> accepted_move_lengths(const ChainTrace& trace);

/// Mean of ‖chain mean − truth‖² over chains.
double posterior_mean_mse(std::span<const Vector> chain_means, const Vector& truth);

/// Mean of the states after the start point.
Vector chain_mean(const ChainTrace& trace);

/// Linear-interpolated quantile of a sample (q in [0, 1]); NaN when empty.
double quantile(std::vector<double> values, double q);

double acceptance_rate(const ChainTrace& trace);

/// Acceptance rate over iterations [begin, end).
double acceptance_rate(const ChainTrace& trace, std::size_t begin, std::size_t end);

/// Spearman rank correlation; ties get their average rank.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

struct ChainSummary {
  std::string algorithm;
  std::size_t draws_per_step = 0;  // N
  std::size_t chain = 0;
  std::size_t iterations = 0;
  double acceptance = 0.0;
  std::optional<double> epsilon;
  std::optional<std::size_t> steps;
  std::size_t forward_draws = 0;
  double wall_seconds = 0.0;
  std::vector<double> ess;
  std::vector<double> ess_per_second;
  Vector mean;
  std::optional<double> squared_error;  // ‖mean − truth‖²
  std::optional<double> kl;
  std::vector<std::array<double, 3>> move_quartiles;  // per coordinate
};

struct GroundTruth {
  std::optional<Vector> posterior_mean;
  const PosteriorGrid* grid = nullptr;
  double kl_bin_size = 0.01;
};

ChainSummary summarize(const ChainTrace& trace, const std::string& algorithm,
                       std::size_t draws_per_step, std::size_t chain, std::optional<double> epsilon,
                       std::optional<std::size_t> steps, const GroundTruth& truth = {});

/// summary.csv: one row per chain followed by `mean` and `sd` aggregate rows per
/// algorithm. Timing-dependent fields are left out; see write_timing_csv.
void write_summary_csv(const std::filesystem::path& path, std::span<const ChainSummary> rows,
                       std::size_t dimension);

/// Wall time and ESS per second, kept apart so summary.csv is reproducible.
void write_timing_csv(const std::filesystem::path& path, std::span<const ChainSummary> rows);

/// iter, theta_1..theta_d, accepted, log_accept. Row 0 is the start state.
void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace);

/// iter, dt_seconds.
void write_trace_timing_csv(const std::filesystem::path& path, const ChainTrace& trace);

/// Reads back the column names and rows of a CSV written above.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace nhmc
