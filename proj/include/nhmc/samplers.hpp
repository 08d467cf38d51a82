#pragma once

// Leapfrog integration, standard HMC on tractable targets, noisy HMC and the
// exchange family for doubly-intractable posteriors, and a chain driver.

#include "nhmc/core.hpp"
#include "nhmc/estimators.hpp"
#include "nhmc/posterior.hpp"
#include "nhmc/rng.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace nhmc {

/// Momentum covariance M with cached inverse and lower Cholesky factor.
class MassMatrix {
 public:
  /// Throws SingularPrecision unless m is symmetric positive definite.
  explicit MassMatrix(const Matrix& m);
  static MassMatrix identity(std::size_t d);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const noexcept { return m_; }
  const Matrix& inverse() const noexcept { return inverse_; }
  /// Lower-triangular F with F Fᵀ = M.
  const Matrix& factor() const noexcept { return factor_; }

  /// r ~ N(0, M).
  Vector sample_momentum(Rng& rng) const;
  /// M⁻¹ r.
  Vector velocity(const Vector& r) const { return inverse_ * r; }
  /// ½ rᵀ M⁻¹ r.
  double kinetic(const Vector& r) const { return 0.5 * r.dot(inverse_ * r); }
  /// log N(r | 0, M).
  double log_normal_density(const Vector& r) const;

 private:
  Matrix m_, inverse_, factor_;
  double log_det_ = 0.0;
};

struct PhasePoint {
  ParamVector theta;
  Vector momentum;
};

/// ∇V at θ, with V the potential energy (negative log target). Called once per
/// visited point, in path order.
using PotentialGradientFn = std::function<Vector(const ParamVector&)>;

/// L leapfrog steps from start. Returns θ₀…θ_L, each paired with the momentum
/// synchronized to it. Throws IntegrationFailure on a non-finite gradient.
std::vector<PhasePoint> leapfrog(const PotentialGradientFn& grad_potential, const MassMatrix& mass,
                                 const PhasePoint& start, double epsilon, std::size_t steps);

/// A density known in closed form, with its exact gradient.
struct TractableTarget {
  std::function<double(const Vector&)> log_density;
  std::function<Vector(const Vector&)> grad_log_density;

  static TractableTarget gaussian(const Vector& mean, const Matrix& covariance);
};

/// Result of one MCMC iteration.
struct Transition {
  ParamVector theta;         // state after the iteration
  ParamVector proposal;      // θ_L or θ′
  bool accepted = false;
  double log_accept = 0.0;   // log ρ (or its estimate); -inf for forced rejection
  bool integration_failed = false;
  std::size_t draws = 0;     // forward-model draws consumed
};

/// One iteration of standard HMC with H(θ, r) = -log π(θ) + ½ rᵀM⁻¹r.
Transition hmc_iteration(const TractableTarget& target, const MassMatrix& mass,
                         const ParamVector& theta, double epsilon, std::size_t steps, Rng& rng);

/// Points visited by a noisy HMC trajectory (θ₀ first), kept for ratio studies.
struct NoisyTrajectory {
  std::vector<VisitedPoint> points;
};

/// One iteration of noisy HMC. Each visited point gets one estimator visit, whose
/// mean statistics drive the kicks and whose batch yields the ratio factor of the
/// segment ending there.
Transition noisy_hmc_iteration(const Posterior& posterior, const NormalizerEstimator& normalizer,
                               const MassMatrix& mass, const ParamVector& theta, double epsilon,
                               std::size_t steps, Rng& rng,
                               NoisyTrajectory* trajectory = nullptr);

/// Exchange algorithm: Gaussian random-walk proposal, one exact draw at θ′.
Transition exchange_iteration(const Posterior& posterior, const Matrix& proposal_cov,
                              const ParamVector& theta, Rng& rng);

/// Noisy exchange: the single-draw ratio is replaced by an N-draw ISE at θ′.
Transition noisy_exchange_iteration(const Posterior& posterior, const Matrix& proposal_cov,
                                    const ParamVector& theta, std::size_t draws, Rng& rng);

// ---------------------------------------------------------------------------

struct HmcKernel {
  TractableTarget target;
  MassMatrix mass;
  double epsilon;
  std::size_t steps;
};

struct NoisyHmcKernel {
  std::shared_ptr<const Posterior> posterior;
  std::shared_ptr<const NormalizerEstimator> normalizer;
  MassMatrix mass;
  double epsilon;
  std::size_t steps;
};

/// draws == 0 selects the exact exchange kernel; otherwise noisy exchange with N draws.
struct ExchangeKernel {
  std::shared_ptr<const Posterior> posterior;
  Matrix proposal_cov;
  std::size_t draws = 0;
};

using KernelSpec = std::variant<HmcKernel, NoisyHmcKernel, ExchangeKernel>;

Transition kernel_step(const KernelSpec& kernel, const ParamVector& theta, Rng& rng);

/// Record of one chain. states has iterations+1 entries (states[0] is the start);
/// the per-iteration arrays have one entry per iteration.
struct ChainTrace {
  std::vector<ParamVector> states;
  std::vector<ParamVector> proposals;
  std::vector<std::uint8_t> accepted;
  std::vector<double> log_accept;
  std::vector<std::uint8_t> integration_failed;
  std::vector<double> dt_seconds;
  std::uint64_t seed = 0;
  std::size_t draws = 0;

  std::size_t iterations() const noexcept { return accepted.size(); }
  void append(const Transition& t, double seconds);
};

ChainTrace run_chain(const KernelSpec& kernel, const ParamVector& theta_init,
                     std::size_t iterations, std::uint64_t seed);
/// Continues with a caller-owned stream; the trace's seed field is left at 0.
ChainTrace run_chain(const KernelSpec& kernel, const ParamVector& theta_init,
                     std::size_t iterations, Rng& rng);

}  // namespace nhmc
