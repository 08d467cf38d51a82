#pragma once

// Exact reference computations for instances small enough to enumerate or to
// sweep with the row-boundary recursion. Everything here is deterministic.

#include "nhmc/core.hpp"
#include "nhmc/estimators.hpp"
#include "nhmc/gibbs_models.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace nhmc {

struct OracleLimits {
  /// Cap on h·log₂K for the boundary recursion (boundary vector of K^h entries).
  double max_boundary_bits = 22.0;
  /// Cap on log₂ of the number of configurations for enumeration.
  double max_enumeration_bits = 22.0;
  /// Cap on the entries of the table kept by exact sampling (sites × K^h).
  double max_sampler_table = 3.4e7;
};

enum class TransferRoute {
  automatic,   // vectorized scaled recursion for K = 2, log domain otherwise
  log_domain,  // pairwise log-sum-exp, any K
  scaled       // linear weights renormalized per site (K = 2 only)
};

/// log Z(θ) of a Potts lattice by a column-major sweep that carries weights over
/// the K^h joint states of the last h visited sites.
double exact_log_z_potts(const PottsModel& model, const ParamVector& theta,
                         TransferRoute route = TransferRoute::automatic,
                         const OracleLimits& limits = {});

/// One exact draw from f(·|θ): the same sweep run forward while keeping every
/// boundary table, then states sampled backward site by site.
Configuration exact_sample_potts(const PottsModel& model, const ParamVector& theta, Rng& rng,
                                 const OracleLimits& limits = {});

/// All configurations of a small model grouped by their statistic vector.
class EnumeratedModel {
 public:
  explicit EnumeratedModel(const GibbsModel& model, const OracleLimits& limits = {});

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t configuration_count() const noexcept { return configurations_; }
  /// Distinct statistic vectors (d × S) and log multiplicities.
  const Matrix& distinct_stats() const noexcept { return stats_; }
  const std::vector<double>& log_counts() const noexcept { return log_counts_; }

  double log_z(const ParamVector& theta) const;
  /// Exhaustive E_θ[s(X)].
  Vector expected_stats(const ParamVector& theta) const;
  /// Exhaustive Cov_θ[s(X)].
  Matrix stats_covariance(const ParamVector& theta) const;
  /// Exhaustive E_θ[g(s(X))] for a scalar function of the statistics.
  double expectation(const ParamVector& theta, const std::function<double(const Vector&)>& g) const;

 private:
  std::vector<double> log_weights(const ParamVector& theta) const;
  std::size_t dimension_ = 0;
  std::size_t configurations_ = 0;
  Matrix stats_;
  std::vector<double> log_counts_;
};

/// log Z(θ) by enumerating every configuration.
double brute_force_log_z(const GibbsModel& model, const ParamVector& theta,
                         const OracleLimits& limits = {});

using LogPartitionFn = std::function<double(const ParamVector&)>;

/// Exact log Z for a model: the recursion for Potts lattices, enumeration otherwise.
LogPartitionFn exact_log_partition(const GibbsModel& model, const OracleLimits& limits = {});

/// Central finite difference of log Z per coordinate, which equals E_θ[s(X)].
Vector exact_grad_log_z(const LogPartitionFn& log_z, const ParamVector& theta, double step = 1e-4);

/// Second central differences of log Z, i.e. Cov_θ[s(X)].
Matrix exact_hessian_log_z(const LogPartitionFn& log_z, const ParamVector& theta,
                           double step = 1e-3);

/// log Z(θ) - log Z(θ′).
double exact_log_ratio(const LogPartitionFn& log_z, const ParamVector& theta,
                       const ParamVector& theta_prime);

/// Exact E_θ[s] and Z ratios; substitutes for auxiliary batches in noisy HMC.
class ExactNormalizer final : public NormalizerEstimator {
 public:
  explicit ExactNormalizer(LogPartitionFn log_z, double gradient_step = 1e-4);
  VisitedPoint visit(const ParamVector& theta, Rng& rng) const override;
  double log_ratio(const ParamVector& previous, const VisitedPoint& current) const override;
  std::size_t draws_per_visit() const override { return 0; }

 private:
  LogPartitionFn log_z_;
  double step_;
};

using LogDensityFn = std::function<double(const ParamVector&)>;

/// Midpoint-rule discretization of a two-parameter posterior on a box.
class PosteriorGrid {
 public:
  PosteriorGrid(LogDensityFn log_unnormalized, Vector lower, Vector upper, std::size_t resolution);

  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }
  std::size_t resolution() const noexcept { return resolution_; }
  double log_evidence() const noexcept { return log_evidence_; }
  double cell_area() const noexcept;

  ParamVector node(std::size_t i, std::size_t j) const;
  /// log unnormalized density at node (i, j).
  double log_value(std::size_t i, std::size_t j) const { return values_[i * resolution_ + j]; }
  /// Normalized log density anywhere in the box.
  double log_density(const ParamVector& theta) const;

  Vector mean() const;
  Matrix covariance() const;
  ParamVector argmax() const;
  /// Σ over nodes of exp(log density) × cell area (1 by construction, up to rounding).
  double total_mass() const;

  /// theta_1, theta_2, log_density rows.
  void write_csv(const std::filesystem::path& path) const;

  /// Samples i.i.d. from the discretized posterior (uniform within the drawn cell).
  std::vector<ParamVector> sample(std::size_t count, Rng& rng) const;

 private:
  LogDensityFn log_unnormalized_;
  Vector lower_, upper_;
  std::size_t resolution_;
  std::vector<double> values_;
  double log_evidence_ = 0.0;
};

/// Posterior grid of θᵀs(x_obs) - log Z(θ) + log p(θ) over the prior box.
PosteriorGrid exact_posterior_grid(const LogPartitionFn& log_z, const SuffStats& observed_stats,
                                   const Prior& box_prior, std::size_t resolution = 200);

/// Same, for any prior, truncated to an explicit integration box. Mass outside
/// the box is ignored, so the box should cover all but a negligible tail.
PosteriorGrid exact_posterior_grid(const LogPartitionFn& log_z, const SuffStats& observed_stats,
                                   const Prior& prior, const Vector& lower, const Vector& upper,
                                   std::size_t resolution);

/// Posterior mean by midpoint quadrature.
Vector posterior_mean_quadrature(const GibbsModel& model, std::span<const SiteState> observed,
                                 const Prior& box_prior, std::size_t resolution = 200);

struct KlResult {
  double value = 0.0;
  bool divergent = false;
  std::size_t occupied_bins = 0;
};

/// Σ over non-empty bins of Q_b log(Q_b / π_b), with π_b = density at the bin
/// midpoint × bin area; bins tile the grid's box from its lower corner.
KlResult kl_divergence_binned(std::span<const ParamVector> samples, const PosteriorGrid& posterior,
                              double bin_size = 0.01);

}  // namespace nhmc
