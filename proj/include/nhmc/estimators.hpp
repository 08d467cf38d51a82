#pragma once

#include "nhmc/core.hpp"
#include "nhmc/posterior.hpp"
#include "nhmc/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace nhmc {

/// N forward draws at `anchor` with their cached sufficient statistics.
/// The same batch serves the gradient estimate at the anchor and the ratio
/// segment that ends there.
struct AuxiliaryBatch {
  ParamVector anchor;
  std::vector<Configuration> draws;
  Matrix stats;  // d × N, column k = s(draws[k])

  static AuxiliaryBatch from_draws(const GibbsModel& model, ParamVector anchor,
                                   std::vector<Configuration> draws);
  std::size_t size() const noexcept { return static_cast<std::size_t>(stats.cols()); }
  Vector mean_stats() const { return stats.rowwise().mean(); }
};

/// Simulates a batch at θ using the posterior's forward-sampler settings.
AuxiliaryBatch draw_batch(const Posterior& posterior, const ParamVector& theta,
                          std::size_t count, Rng& rng);

/// log of an unbiased (linear-domain) estimate of a ratio Z(θ)/Z(θ′).
struct RatioEstimate {
  double log_value = 0.0;
  std::size_t n_draws = 0;
  std::size_t n_segments = 0;
};

enum class SupportPolicy {
  require_inside,      // θ outside the prior support is an error
  zero_prior_gradient  // integrator excursions: prior term contributes nothing
};

/// s(x) - mean_stats + ∇log p(θ).
Vector grad_log_post_from_mean(const Posterior& posterior, const ParamVector& theta,
                               const Vector& mean_stats,
                               SupportPolicy policy = SupportPolicy::require_inside);

/// Monte Carlo gradient of log π(θ|x): s(x) - (1/N)Σ s(u_k) + ∇log p(θ), batch drawn at θ.
Vector grad_log_post_estimate(const Posterior& posterior, const ParamVector& theta,
                              const AuxiliaryBatch& batch,
                              SupportPolicy policy = SupportPolicy::require_inside);

/// Importance-sampling estimate of Z(θ)/Z(θ′) from draws at θ′:
/// log (1/N) Σ exp{(θ-θ′)ᵀ s(u_k)}.
RatioEstimate ise_log_ratio(const ParamVector& theta, const ParamVector& theta_prime,
                            const AuxiliaryBatch& batch_at_theta_prime);

/// Product of consecutive-point estimates along θ₀…θ_L; batches[l] is drawn at θ_{l+1}.
RatioEstimate lfe_log_ratio(std::span<const ParamVector> path,
                            std::span<const AuxiliaryBatch> batches);

/// Posterior precision at the mode from the sample covariance of s over the batch,
/// minus the prior Hessian, repaired to SPD.
Matrix hessian_precision_estimate(const Posterior& posterior, const ParamVector& mode,
                                  const AuxiliaryBatch& batch);

/// Unbiased sample covariance of the batch statistics.
Matrix sample_covariance(const Matrix& columns);

/// Symmetrizes, then adds λI (λ starts at max(0, floor - λ_min), ×10 per retry)
/// until a Cholesky factorization succeeds. Throws SingularPrecision when it never does.
Matrix repair_spd(const Matrix& m, double floor = 1e-8);

/// One point visited by an integrator, with what the ratio and gradient estimates need.
struct VisitedPoint {
  ParamVector theta;
  Vector mean_stats;                   // estimate of E_θ[s(X)]
  std::optional<AuxiliaryBatch> batch; // present for simulation-based estimators
};

/// Source of E_θ[s(X)] and of Z(θ_prev)/Z(θ) at the points of a trajectory.
class NormalizerEstimator {
 public:
  virtual ~NormalizerEstimator() = default;
  virtual VisitedPoint visit(const ParamVector& theta, Rng& rng) const = 0;
  /// log of the estimate of Z(previous)/Z(current.theta).
  virtual double log_ratio(const ParamVector& previous, const VisitedPoint& current) const = 0;
  /// Forward draws consumed per visited point.
  virtual std::size_t draws_per_visit() const = 0;
};

/// Draws N auxiliary configurations per visited point; the ratio is the ISE on
/// that batch, so a trajectory accumulates the leapfrog estimator.
class MonteCarloNormalizer final : public NormalizerEstimator {
 public:
  MonteCarloNormalizer(const Posterior& posterior, std::size_t draws);
  VisitedPoint visit(const ParamVector& theta, Rng& rng) const override;
  double log_ratio(const ParamVector& previous, const VisitedPoint& current) const override;
  std::size_t draws_per_visit() const override { return draws_; }

 private:
  const Posterior& posterior_;
  std::size_t draws_;
};

}  // namespace nhmc
