#include "nhmc/samplers.hpp"

#include "nhmc/gibbs_models.hpp"
#include "nhmc/numerics.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace nhmc {

MassMatrix::MassMatrix(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DimensionMismatch("mass matrix must be square");
  if (!m.allFinite() || !m.isApprox(m.transpose(), 1e-12)) {
    throw SingularPrecision("mass matrix must be finite and symmetric");
  }
  m_ = 0.5 * (m + m.transpose());
  Eigen::LLT<Matrix> llt(m_);
  if (llt.info() != Eigen::Success) throw SingularPrecision("mass matrix is not positive definite");
  factor_ = llt.matrixL();
  inverse_ = llt.solve(Matrix::Identity(m_.rows(), m_.cols()));
  inverse_ = 0.5 * (inverse_ + inverse_.transpose());
  log_det_ = 2.0 * factor_.diagonal().array().log().sum();
}

MassMatrix MassMatrix::identity(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  return MassMatrix(Matrix::Identity(n, n));
}

Vector MassMatrix::sample_momentum(Rng& rng) const {
  Vector z(m_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = standard_normal(rng);
  return factor_ * z;
}

double MassMatrix::log_normal_density(const Vector& r) const {
  const double d = static_cast<double>(r.size());
  return -kinetic(r) - 0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_);
}

std::vector<PhasePoint> leapfrog(const PotentialGradientFn& grad_potential, const MassMatrix& mass,
                                 const PhasePoint& start, double epsilon, std::size_t steps) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("leapfrog step size must be positive");
  if (steps == 0) throw std::invalid_argument("leapfrog needs at least one step");
  require_dimension(start.theta, mass.dimension(), "leapfrog position");
  require_dimension(start.momentum, mass.dimension(), "leapfrog momentum");

  auto gradient_at = [&](const ParamVector& theta, std::size_t step) {
    Vector g = grad_potential(theta);
    if (!g.allFinite()) throw IntegrationFailure("non-finite gradient during leapfrog", step);
    return g;
  };

  std::vector<PhasePoint> path;
  path.reserve(steps + 1);
  path.push_back(start);
  Vector r = start.momentum - 0.5 * epsilon * gradient_at(start.theta, 0);
  ParamVector theta = start.theta;
  for (std::size_t l = 1; l <= steps; ++l) {
    theta += epsilon * mass.velocity(r);
    if (!theta.allFinite()) throw IntegrationFailure("non-finite position during leapfrog", l);
    const Vector g = gradient_at(theta, l);
    const Vector synchronized = r - 0.5 * epsilon * g;
    path.push_back({theta, synchronized});
    if (l < steps) r -= epsilon * g;
  }
  return path;
}

TractableTarget TractableTarget::gaussian(const Vector& mean, const Matrix& covariance) {
  const Matrix precision = covariance.inverse();
  TractableTarget t;
  t.log_density = [mean, precision](const Vector& x) {
    const Vector diff = x - mean;
    return -0.5 * diff.dot(precision * diff);
  };
  t.grad_log_density = [mean, precision](const Vector& x) -> Vector { return -(precision * (x - mean)); };
  return t;
}

namespace {

bool metropolis_accept(double log_rho, Rng& rng) {
  const double u = uniform01(rng);
  return std::log(u) < log_rho;
}

Transition rejected(const ParamVector& theta, ParamVector proposal) {
  Transition t;
  t.theta = theta;
  t.proposal = std::move(proposal);
  t.accepted = false;
  t.log_accept = kNegInf;
  return t;
}

}  // namespace

Transition hmc_iteration(const TractableTarget& target, const MassMatrix& mass,
                         const ParamVector& theta, double epsilon, std::size_t steps, Rng& rng) {
  const Vector r0 = mass.sample_momentum(rng);
  auto grad_potential = [&](const ParamVector& x) -> Vector { return -target.grad_log_density(x); };
  std::vector<PhasePoint> path;
  try {
    path = leapfrog(grad_potential, mass, {theta, r0}, epsilon, steps);
  } catch (const IntegrationFailure&) {
    Transition t = rejected(theta, theta);
    t.integration_failed = true;
    return t;
  }
  const PhasePoint& end = path.back();
  const double h0 = -target.log_density(theta) + mass.kinetic(r0);
  const double h1 = -target.log_density(end.theta) + mass.kinetic(end.momentum);
  Transition t;
  t.proposal = end.theta;
  t.log_accept = std::isfinite(h1) ? h0 - h1 : kNegInf;
  t.accepted = metropolis_accept(t.log_accept, rng);
  t.theta = t.accepted ? end.theta : theta;
  return t;
}

Transition noisy_hmc_iteration(const Posterior& posterior, const NormalizerEstimator& normalizer,
                               const MassMatrix& mass, const ParamVector& theta, double epsilon,
                               std::size_t steps, Rng& rng, NoisyTrajectory* trajectory) {
  if (!posterior.prior.contains(theta)) throw OutsideSupport("noisy HMC started outside the prior support");
  const Vector r0 = mass.sample_momentum(rng);

  std::vector<VisitedPoint> visits;
  visits.reserve(steps + 1);
  auto grad_potential = [&](const ParamVector& x) -> Vector {
    visits.push_back(normalizer.visit(x, rng));
    return -grad_log_post_from_mean(posterior, x, visits.back().mean_stats,
                                    SupportPolicy::zero_prior_gradient);
  };

  Transition t;
  t.draws = 0;
  std::vector<PhasePoint> path;
  try {
    path = leapfrog(grad_potential, mass, {theta, r0}, epsilon, steps);
  } catch (const IntegrationFailure&) {
    t = rejected(theta, theta);
    t.integration_failed = true;
    t.draws = visits.size() * normalizer.draws_per_visit();
    if (trajectory) trajectory->points = std::move(visits);
    return t;
  }
  t.draws = visits.size() * normalizer.draws_per_visit();
  const PhasePoint& end = path.back();
  t.proposal = end.theta;

  if (!posterior.prior.contains(end.theta)) {
    t.log_accept = kNegInf;
  } else {
    double log_rho = (end.theta - theta).dot(posterior.observed_stats);
    log_rho += mass.log_normal_density(end.momentum) - mass.log_normal_density(r0);
    log_rho += posterior.prior.log_density(end.theta) - posterior.prior.log_density(theta);
    for (std::size_t l = 1; l < visits.size(); ++l) {
      log_rho += normalizer.log_ratio(visits[l - 1].theta, visits[l]);
    }
    t.log_accept = std::isnan(log_rho) ? kNegInf : log_rho;
  }
  // The uniform is drawn even for forced rejections so streams stay aligned.
  t.accepted = metropolis_accept(t.log_accept, rng);
  t.theta = t.accepted ? end.theta : theta;
  if (trajectory) trajectory->points = std::move(visits);
  return t;
}

namespace {

ParamVector propose_gaussian(const Matrix& proposal_cov, const ParamVector& theta, Rng& rng) {
  Eigen::LLT<Matrix> llt(proposal_cov);
  if (llt.info() != Eigen::Success) throw SingularPrecision("proposal covariance is not positive definite");
  Vector z(theta.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = standard_normal(rng);
  return theta + Matrix(llt.matrixL()) * z;
}

// Shared tail of both exchange kernels given log Ẑ(θ)/Z(θ′).
Transition exchange_accept(const Posterior& posterior, const ParamVector& theta,
                           const ParamVector& proposal, double log_z_ratio, std::size_t draws,
                           Rng& rng) {
  Transition t;
  t.proposal = proposal;
  t.draws = draws;
  t.log_accept = log_z_ratio + (proposal - theta).dot(posterior.observed_stats) +
                 posterior.prior.log_density(proposal) - posterior.prior.log_density(theta);
  t.accepted = metropolis_accept(t.log_accept, rng);
  t.theta = t.accepted ? proposal : theta;
  return t;
}

}  // namespace

Transition exchange_iteration(const Posterior& posterior, const Matrix& proposal_cov,
                              const ParamVector& theta, Rng& rng) {
  const ParamVector proposal = propose_gaussian(proposal_cov, theta, rng);
  if (!posterior.prior.contains(proposal)) return rejected(theta, proposal);
  const SuffStats s = draw_batch(posterior, proposal, 1, rng).stats.col(0);
  return exchange_accept(posterior, theta, proposal, (theta - proposal).dot(s), 1, rng);
}

Transition noisy_exchange_iteration(const Posterior& posterior, const Matrix& proposal_cov,
                                    const ParamVector& theta, std::size_t draws, Rng& rng) {
  if (draws == 0) throw std::invalid_argument("noisy exchange needs at least one draw");
  const ParamVector proposal = propose_gaussian(proposal_cov, theta, rng);
  if (!posterior.prior.contains(proposal)) return rejected(theta, proposal);
  const AuxiliaryBatch batch = draw_batch(posterior, proposal, draws, rng);
  return exchange_accept(posterior, theta, proposal, ise_log_ratio(theta, proposal, batch).log_value,
                         draws, rng);
}

// ---------------------------------------------------------------------------

Transition kernel_step(const KernelSpec& kernel, const ParamVector& theta, Rng& rng) {
  return std::visit(
      [&](const auto& k) -> Transition {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, HmcKernel>) {
          return hmc_iteration(k.target, k.mass, theta, k.epsilon, k.steps, rng);
        } else if constexpr (std::is_same_v<K, NoisyHmcKernel>) {
          return noisy_hmc_iteration(*k.posterior, *k.normalizer, k.mass, theta, k.epsilon, k.steps, rng);
        } else {
          return k.draws == 0 ? exchange_iteration(*k.posterior, k.proposal_cov, theta, rng)
                              : noisy_exchange_iteration(*k.posterior, k.proposal_cov, theta, k.draws, rng);
        }
      },
      kernel);
}

void ChainTrace::append(const Transition& t, double seconds) {
  states.push_back(t.theta);
  proposals.push_back(t.proposal);
  accepted.push_back(t.accepted ? 1 : 0);
  log_accept.push_back(t.log_accept);
  integration_failed.push_back(t.integration_failed ? 1 : 0);
  dt_seconds.push_back(seconds);
  draws += t.draws;
}

ChainTrace run_chain(const KernelSpec& kernel, const ParamVector& theta_init,
                     std::size_t iterations, Rng& rng) {
  ChainTrace trace;
  trace.states.reserve(iterations + 1);
  trace.states.push_back(theta_init);
  ParamVector theta = theta_init;
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Transition t = kernel_step(kernel, theta, rng);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    trace.append(t, elapsed.count());
    theta = t.theta;
  }
  return trace;
}

ChainTrace run_chain(const KernelSpec& kernel, const ParamVector& theta_init,
                     std::size_t iterations, std::uint64_t seed) {
  Rng rng(seed);
  ChainTrace trace = run_chain(kernel, theta_init, iterations, rng);
  trace.seed = seed;
  return trace;
}

}  // namespace nhmc
