#include "nhmc/estimators.hpp"

#include "nhmc/gibbs_models.hpp"
#include "nhmc/numerics.hpp"

#include <cmath>

namespace nhmc {

AuxiliaryBatch AuxiliaryBatch::from_draws(const GibbsModel& model, ParamVector anchor,
                                          std::vector<Configuration> draws) {
  if (draws.empty()) throw std::invalid_argument("auxiliary batch needs at least one draw");
  AuxiliaryBatch batch;
  const auto d = static_cast<Eigen::Index>(model.dimension());
  batch.stats.resize(d, static_cast<Eigen::Index>(draws.size()));
  for (std::size_t k = 0; k < draws.size(); ++k) {
    batch.stats.col(static_cast<Eigen::Index>(k)) = model.suff_stats_unchecked(draws[k]);
  }
  batch.anchor = std::move(anchor);
  batch.draws = std::move(draws);
  return batch;
}

AuxiliaryBatch draw_batch(const Posterior& posterior, const ParamVector& theta,
                          std::size_t count, Rng& rng) {
  auto draws = posterior.start_at_observed
                   ? forward_sample_from(*posterior.model, theta, posterior.observed, count, posterior.sweeps, rng)
                   : forward_sample(*posterior.model, theta, count, posterior.sweeps, rng);
  return AuxiliaryBatch::from_draws(*posterior.model, theta, std::move(draws));
}

Vector grad_log_post_from_mean(const Posterior& posterior, const ParamVector& theta,
                               const Vector& mean_stats, SupportPolicy policy) {
  require_dimension(theta, posterior.dimension(), "gradient estimate");
  Vector grad = posterior.observed_stats - mean_stats;
  if (posterior.prior.contains(theta)) {
    grad += posterior.prior.gradient(theta);
  } else if (policy == SupportPolicy::require_inside) {
    throw OutsideSupport("gradient requested outside the prior support");
  }
  return grad;
}

Vector grad_log_post_estimate(const Posterior& posterior, const ParamVector& theta,
                              const AuxiliaryBatch& batch, SupportPolicy policy) {
  if (batch.anchor.size() != theta.size() || batch.anchor != theta) {
    throw std::invalid_argument("gradient estimate: batch was not drawn at θ");
  }
  return grad_log_post_from_mean(posterior, theta, batch.mean_stats(), policy);
}

RatioEstimate ise_log_ratio(const ParamVector& theta, const ParamVector& theta_prime,
                            const AuxiliaryBatch& batch) {
  if (batch.anchor.size() != theta_prime.size() || batch.anchor != theta_prime) {
    throw std::invalid_argument("ISE: batch was not drawn at θ′");
  }
  require_dimension(theta, static_cast<std::size_t>(batch.stats.rows()), "ISE");
  const Vector step = theta - theta_prime;
  const Eigen::RowVectorXd log_weights = step.transpose() * batch.stats;
  const double n = static_cast<double>(batch.size());
  RatioEstimate out;
  out.log_value = log_sum_exp(std::span<const double>(log_weights.data(), batch.size())) - std::log(n);
  out.n_draws = batch.size();
  out.n_segments = 1;
  return out;
}

RatioEstimate lfe_log_ratio(std::span<const ParamVector> path,
                            std::span<const AuxiliaryBatch> batches) {
  if (path.size() < 2 || batches.size() + 1 != path.size()) {
    throw std::invalid_argument("LFE: need L+1 path points and L batches");
  }
  RatioEstimate out;
  out.n_draws = batches.front().size();
  for (std::size_t l = 0; l + 1 < path.size(); ++l) {
    out.log_value += ise_log_ratio(path[l], path[l + 1], batches[l]).log_value;
  }
  out.n_segments = batches.size();
  return out;
}

Matrix sample_covariance(const Matrix& columns) {
  const auto n = columns.cols();
  if (n < 2) throw std::invalid_argument("sample covariance needs at least two columns");
  const Vector mean = columns.rowwise().mean();
  const Matrix centered = columns.colwise() - mean;
  return centered * centered.transpose() / static_cast<double>(n - 1);
}

Matrix repair_spd(const Matrix& m, double floor) {
  const Matrix sym = 0.5 * (m + m.transpose());
  if (!sym.allFinite()) throw SingularPrecision("precision estimate is not finite");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  double jitter = std::max(0.0, floor - eig.eigenvalues().minCoeff());
  const auto identity = Matrix::Identity(sym.rows(), sym.cols());
  for (int attempt = 0; attempt < 40; ++attempt) {
    const Matrix candidate = sym + jitter * identity;
    Eigen::LLT<Matrix> llt(candidate);
    if (llt.info() == Eigen::Success && (Matrix(llt.matrixL()).diagonal().array() > 0).all()) {
      return candidate;
    }
    jitter = jitter == 0.0 ? floor : jitter * 10.0;
  }
  throw SingularPrecision("precision estimate could not be made positive definite");
}

Matrix hessian_precision_estimate(const Posterior& posterior, const ParamVector& mode,
                                  const AuxiliaryBatch& batch) {
  const std::size_t d = posterior.dimension();
  if (batch.size() < d + 1) {
    throw std::invalid_argument("Hessian estimate needs at least d+1 draws");
  }
  if (batch.anchor != mode) throw std::invalid_argument("Hessian estimate: batch not drawn at the mode");
  // ∇²A vanishes for a linear potential; the precision is Cov[s] - ∇²log p.
  Matrix precision = sample_covariance(batch.stats);
  if (posterior.prior.contains(mode)) precision -= posterior.prior.hessian(mode);
  return repair_spd(precision);
}

MonteCarloNormalizer::MonteCarloNormalizer(const Posterior& posterior, std::size_t draws)
    : posterior_(posterior), draws_(draws) {
  if (draws == 0) throw std::invalid_argument("need at least one auxiliary draw");
}

VisitedPoint MonteCarloNormalizer::visit(const ParamVector& theta, Rng& rng) const {
  VisitedPoint point;
  point.theta = theta;
  point.batch = draw_batch(posterior_, theta, draws_, rng);
  point.mean_stats = point.batch->mean_stats();
  return point;
}

double MonteCarloNormalizer::log_ratio(const ParamVector& previous,
                                       const VisitedPoint& current) const {
  return ise_log_ratio(previous, current.theta, *current.batch).log_value;
}

}  // namespace nhmc
