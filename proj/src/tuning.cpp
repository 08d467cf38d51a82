#include "nhmc/tuning.hpp"

#include "nhmc/numerics.hpp"

#include <chrono>
#include <cmath>

namespace nhmc {

DualAveragingState::DualAveragingState(double initial_epsilon, DualAveragingOptions options)
    : options_(options), mu_(std::log(10.0 * initial_epsilon)), log_epsilon_(std::log(initial_epsilon)) {
  if (!(initial_epsilon > 0.0) || !std::isfinite(initial_epsilon)) {
    throw std::invalid_argument("initial step size must be positive and finite");
  }
}

double DualAveragingState::update(double accept_prob) {
  if (!(accept_prob >= 0.0 && accept_prob <= 1.0)) {
    throw std::invalid_argument("acceptance probability must lie in [0, 1]");
  }
  ++m_;
  const double m = static_cast<double>(m_);
  const double w = 1.0 / (m + options_.t0);
  h_bar_ = (1.0 - w) * h_bar_ + w * (options_.target - accept_prob);
  log_epsilon_ = mu_ - std::sqrt(m) / options_.gamma * h_bar_;
  const double eta = std::pow(m, -options_.kappa);
  log_epsilon_bar_ = eta * log_epsilon_ + (1.0 - eta) * log_epsilon_bar_;
  return epsilon();
}

double DualAveragingState::epsilon() const noexcept { return std::exp(log_epsilon_); }

double DualAveragingState::averaged_epsilon() const noexcept {
  return m_ == 0 ? epsilon() : std::exp(log_epsilon_bar_);
}

double integration_time(std::size_t d) {
  if (d == 0) throw std::invalid_argument("dimension must be positive");
  return 2.38 / std::sqrt(static_cast<double>(d));
}

std::size_t integration_time_schedule(std::size_t d, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("step size must be positive");
  const double steps = std::nearbyint(integration_time(d) / epsilon);  // ties to even
  return steps < 1.0 ? 1 : static_cast<std::size_t>(steps);
}

double find_initial_step_size(const std::function<double(double)>& accept_prob, double start,
                              std::size_t max_rounds) {
  double epsilon = start;
  double a = accept_prob(epsilon);
  const double direction = a > 0.5 ? 1.0 : -1.0;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    const bool crossed = direction > 0 ? a <= 0.5 : a > 0.5;
    if (crossed) break;
    epsilon *= std::pow(2.0, direction);
    a = accept_prob(epsilon);
  }
  return epsilon;
}

GradientEstimator monte_carlo_gradient(const Posterior& posterior, std::size_t draws) {
  return [&posterior, draws](const ParamVector& theta, Rng& rng) -> Vector {
    const AuxiliaryBatch batch = draw_batch(posterior, theta, draws, rng);
    return grad_log_post_estimate(posterior, theta, batch, SupportPolicy::zero_prior_gradient);
  };
}

MapSearchResult map_search_ruppert_polyak(const GradientEstimator& gradient, const Prior& prior,
                                          const ParamVector& theta_init, Rng& rng,
                                          const RuppertPolyakOptions& options) {
  std::vector<ParamVector> iterates{prior.project(theta_init)};
  MapSearchResult result;
  for (std::size_t n = 1; n <= options.max_iterations; ++n) {
    const ParamVector& current = iterates.back();
    const double a = options.a0 / std::pow(static_cast<double>(n), options.exponent);
    ParamVector next = prior.project(current + a * gradient(current, rng));
    if (!next.allFinite()) throw Error("stochastic approximation produced a non-finite iterate");
    const double step = (next - current).norm();
    iterates.push_back(std::move(next));
    result.iterations = n;
    if (step < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  const std::size_t first = iterates.size() / 2;
  ParamVector sum = ParamVector::Zero(theta_init.size());
  for (std::size_t i = first; i < iterates.size(); ++i) sum += iterates[i];
  result.theta = sum / static_cast<double>(iterates.size() - first);
  result.last_iterate = iterates.back();
  return result;
}

MapSearchResult map_search_robbins_monro(const GradientEstimator& gradient,
                                         const ParamVector& theta_init, std::size_t iterations,
                                         double alpha, Rng& rng, double max_step) {
  if (iterations == 0) throw std::invalid_argument("Robbins-Monro needs at least one iteration");
  if (!(max_step > 0.0)) throw std::invalid_argument("Robbins-Monro max_step must be positive");
  ParamVector theta = theta_init;
  for (std::size_t i = 1; i <= iterations; ++i) {
    Vector step = alpha / static_cast<double>(i) * gradient(theta, rng);
    const double norm = step.norm();
    if (norm > max_step) step *= max_step / norm;
    theta += step;
    if (!theta.allFinite()) {
      throw Error("Robbins-Monro iterate became non-finite at iteration " + std::to_string(i));
    }
  }
  MapSearchResult result;
  result.theta = theta;
  result.last_iterate = theta;
  result.iterations = iterations;
  result.converged = true;
  return result;
}

PseudoLikelihoodResult maximum_pseudo_likelihood(const GibbsModel& model, std::span<const SiteState> x,
                                                 std::size_t max_iterations, double tolerance) {
  model.suff_stats(x);  // validates
  const std::size_t d = model.dimension();
  const int k_states = model.num_states();
  // stats[i][k]: statistics with site i set to k, shifted by s(x). Only these
  // differences enter the conditional p(xᵢ = k | rest) ∝ exp(θᵀ stats[i][k]).
  const SuffStats base = model.suff_stats_unchecked(x);
  std::vector<std::vector<Vector>> stats(model.site_count(), std::vector<Vector>(k_states));
  Configuration work(x.begin(), x.end());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const SiteState keep = work[i];
    for (int k = 0; k < k_states; ++k) {
      work[i] = static_cast<SiteState>(k);
      stats[i][k] = model.suff_stats_unchecked(work) - base;
    }
    work[i] = keep;
  }

  std::vector<double> logits(k_states);
  const auto evaluate = [&](const ParamVector& theta, Vector* grad, Matrix* hess) {
    double value = 0.0;
    if (grad) *grad = Vector::Zero(d);
    if (hess) *hess = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < stats.size(); ++i) {
      for (int k = 0; k < k_states; ++k) logits[k] = theta.dot(stats[i][k]);
      const double lse = log_sum_exp(logits);
      value += logits[x[i]] - lse;
      if (!grad) continue;
      Vector mean = Vector::Zero(d);
      Matrix second = Matrix::Zero(d, d);
      for (int k = 0; k < k_states; ++k) {
        const double p = std::exp(logits[k] - lse);
        mean += p * stats[i][k];
        second += p * stats[i][k] * stats[i][k].transpose();
      }
      *grad += stats[i][x[i]] - mean;
      *hess -= second - mean * mean.transpose();
    }
    return value;
  };

  PseudoLikelihoodResult result;
  result.theta = ParamVector::Zero(d);
  Vector grad;
  Matrix hess;
  double value = evaluate(result.theta, &grad, &hess);
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    result.iterations = it;
    if (grad.norm() < tolerance) {
      result.converged = true;
      break;
    }
    // Levenberg shift keeps the step an ascent direction when the Hessian is flat.
    Matrix neg = -hess;
    neg.diagonal().array() += 1e-10 * (1.0 + neg.diagonal().array().abs());
    const Vector step = neg.ldlt().solve(grad);
    double scale = 1.0;
    double next_value = value;
    ParamVector next;
    for (int halvings = 0; halvings < 50; ++halvings, scale *= 0.5) {
      next = result.theta + scale * step;
      next_value = evaluate(next, nullptr, nullptr);
      if (next_value >= value) break;
    }
    if (!(next_value >= value)) break;
    result.theta = next;
    value = evaluate(result.theta, &grad, &hess);
  }
  if (!result.converged) result.converged = grad.norm() < tolerance;
  // Separable data also flattens the gradient, but only as θ runs off to infinity
  // where the curvature vanishes with it.
  if (result.converged) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(-hess);
    result.converged = eig.eigenvalues().minCoeff() > 1e-6 * std::max(1.0, eig.eigenvalues().maxCoeff());
  }
  result.log_pseudo_likelihood = value;
  return result;
}

MassMatrix mass_matrix_from_mode(const Posterior& posterior, const ParamVector& mode,
                                 std::size_t draws, Rng& rng) {
  const AuxiliaryBatch batch = draw_batch(posterior, mode, draws, rng);
  return MassMatrix(hessian_precision_estimate(posterior, mode, batch));
}

Matrix exchange_proposal_cov(const MassMatrix& mass, std::size_t d) {
  return (2.38 * 2.38 / static_cast<double>(d)) * mass.inverse();
}

namespace {

double acceptance_probability(const Transition& t) {
  if (t.integration_failed || !(t.log_accept > kNegInf)) return 0.0;
  return t.log_accept >= 0.0 ? 1.0 : std::exp(t.log_accept);
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TunedChain run_tuned_noisy_hmc(const std::shared_ptr<const Posterior>& posterior,
                               const std::shared_ptr<const NormalizerEstimator>& normalizer,
                               const MassMatrix& mass, const ParamVector& theta_init,
                               std::size_t burn_in, std::size_t iterations, std::uint64_t seed,
                               const DualAveragingOptions& options) {
  Rng rng(seed);
  const std::size_t d = posterior->dimension();
  TunedChain out;

  // Trial single steps from θ_init; the chain state does not move here.
  out.initial_epsilon = find_initial_step_size([&](double eps) {
    return acceptance_probability(noisy_hmc_iteration(*posterior, *normalizer, mass, theta_init, eps, 1, rng));
  });

  DualAveragingState adapt(out.initial_epsilon, options);
  double epsilon = out.initial_epsilon;
  ParamVector theta = theta_init;
  out.burn_in.states.push_back(theta);
  for (std::size_t i = 0; i < burn_in; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t steps = integration_time_schedule(d, epsilon);
    const Transition t = noisy_hmc_iteration(*posterior, *normalizer, mass, theta, epsilon, steps, rng);
    out.burn_in.append(t, elapsed_since(start));
    theta = t.theta;
    epsilon = adapt.update(acceptance_probability(t));
  }
  out.epsilon = adapt.averaged_epsilon();
  out.steps = integration_time_schedule(d, out.epsilon);
  const KernelSpec kernel = NoisyHmcKernel{posterior, normalizer, mass, out.epsilon, out.steps};
  out.trace = run_chain(kernel, theta, iterations, rng);
  out.burn_in.seed = out.trace.seed = seed;
  return out;
}

TunedChain run_tuned_exchange(const ExchangeKernel& kernel, const ParamVector& theta_init,
                              std::size_t burn_in, std::size_t iterations, std::uint64_t seed) {
  Rng rng(seed);
  TunedChain out;
  out.burn_in = run_chain(kernel, theta_init, burn_in, rng);
  out.trace = run_chain(kernel, out.burn_in.states.back(), iterations, rng);
  out.burn_in.seed = out.trace.seed = seed;
  return out;
}

}  // namespace nhmc
