#pragma once

// Step-size adaptation, trajectory length, mode search and mass-matrix setup.

#include "nhmc/core.hpp"
#include "nhmc/estimators.hpp"
#include "nhmc/posterior.hpp"
#include "nhmc/samplers.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace nhmc {

struct DualAveragingOptions {
  double target = 0.65;  // δ
  double gamma = 0.05;
  double t0 = 10.0;
  double kappa = 0.75;
};

/// Dual averaging of log ε toward a target acceptance probability.
class DualAveragingState {
 public:
  DualAveragingState(double initial_epsilon, DualAveragingOptions options = {});

  /// Feeds one acceptance probability in [0, 1]; returns the ε to use next.
  double update(double accept_prob);

  double epsilon() const noexcept;           // current (non-averaged) iterate
  double averaged_epsilon() const noexcept;  // the value frozen after burn-in
  double log_epsilon() const noexcept { return log_epsilon_; }
  double error_sum() const noexcept { return h_bar_; }
  std::size_t iterations() const noexcept { return m_; }
  double shrinkage_target() const noexcept { return mu_; }
  const DualAveragingOptions& options() const noexcept { return options_; }

 private:
  DualAveragingOptions options_;
  double mu_;
  double log_epsilon_;
  double log_epsilon_bar_ = 0.0;
  double h_bar_ = 0.0;
  std::size_t m_ = 0;
};

/// Integration time t = 2.38/√d.
double integration_time(std::size_t d);

/// L = max(1, round-half-even(t/ε)).
std::size_t integration_time_schedule(std::size_t d, double epsilon);

/// Doubles or halves ε from `start` until the single-step acceptance probability
/// crosses 0.5. accept_prob(ε) evaluates one L = 1 trial.
double find_initial_step_size(const std::function<double(double)>& accept_prob, double start = 1.0,
                              std::size_t max_rounds = 40);

/// ĝ(θ): a (possibly stochastic) estimate of ∇ log π(θ | x).
using GradientEstimator = std::function<Vector(const ParamVector&, Rng&)>;

/// Gradient estimator from N forward draws at θ.
GradientEstimator monte_carlo_gradient(const Posterior& posterior, std::size_t draws);

struct RuppertPolyakOptions {
  double a0 = 0.1;
  double exponent = 0.6;
  double tolerance = 1e-3;
  std::size_t max_iterations = 5000;
};

struct MapSearchResult {
  ParamVector theta;
  std::size_t iterations = 0;
  bool converged = false;  // false: cap reached; theta is still the running average
  ParamVector last_iterate;
};

/// Projected stochastic approximation with a_n = a₀/n^exponent, returning the
/// average of the trailing half of the iterates.
MapSearchResult map_search_ruppert_polyak(const GradientEstimator& gradient, const Prior& prior,
                                          const ParamVector& theta_init, Rng& rng,
                                          const RuppertPolyakOptions& options = {});

/// θ ← θ + (α/i) ĝ(θ) for i = 1..iterations; returns the final iterate. A finite
/// max_step caps the norm of each update. Throws Error on a non-finite iterate.
MapSearchResult map_search_robbins_monro(const GradientEstimator& gradient,
                                         const ParamVector& theta_init, std::size_t iterations,
                                         double alpha, Rng& rng,
                                         double max_step = std::numeric_limits<double>::infinity());

struct PseudoLikelihoodResult {
  ParamVector theta;
  std::size_t iterations = 0;
  bool converged = false;
  double log_pseudo_likelihood = 0.0;
};

/// Maximizer of Σᵢ log p(xᵢ | x₋ᵢ, θ) by damped Newton from θ = 0. Works for any
/// model; the full conditionals are computed from statistic differences.
/// converged is false when the gradient norm is still above `tolerance` or the
/// curvature has vanished (separable data, where the maximizer sits at infinity).
PseudoLikelihoodResult maximum_pseudo_likelihood(const GibbsModel& model, std::span<const SiteState> x,
                                                 std::size_t max_iterations = 100, double tolerance = 1e-8);

/// Mass matrix from N forward draws at the mode.
MassMatrix mass_matrix_from_mode(const Posterior& posterior, const ParamVector& mode,
                                 std::size_t draws, Rng& rng);

/// (2.38²/d) M⁻¹.
Matrix exchange_proposal_cov(const MassMatrix& mass, std::size_t d);

struct TunedChain {
  double initial_epsilon = 0.0;
  double epsilon = 0.0;   // frozen after burn-in
  std::size_t steps = 0;  // L matching the frozen ε
  ChainTrace burn_in;     // adaptation iterations, excluded from summaries
  ChainTrace trace;       // fixed-kernel iterations
};

/// Noisy HMC with dual-averaging burn-in (L re-derived from ε at every update),
/// then `iterations` iterations at the frozen averaged ε.
TunedChain run_tuned_noisy_hmc(const std::shared_ptr<const Posterior>& posterior,
                               const std::shared_ptr<const NormalizerEstimator>& normalizer,
                               const MassMatrix& mass, const ParamVector& theta_init,
                               std::size_t burn_in, std::size_t iterations, std::uint64_t seed,
                               const DualAveragingOptions& options = {});

/// Exchange-family chain: the burn-in runs the same fixed kernel and is discarded.
TunedChain run_tuned_exchange(const ExchangeKernel& kernel, const ParamVector& theta_init,
                              std::size_t burn_in, std::size_t iterations, std::uint64_t seed);

}  // namespace nhmc
