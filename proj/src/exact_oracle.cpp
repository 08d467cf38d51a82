#include "nhmc/exact_oracle.hpp"

#include "nhmc/numerics.hpp"
#include "nhmc/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

namespace nhmc {
namespace {

std::size_t checked_power(std::size_t base, std::size_t exponent, double cap_bits,
                          const std::string& what) {
  const double bits = static_cast<double>(exponent) * std::log2(static_cast<double>(base));
  if (bits > cap_bits + 1e-12) {
    throw ResourceLimit(what + " needs 2^" + std::to_string(bits) + " states, cap is 2^" +
                        std::to_string(cap_bits));
  }
  std::size_t out = 1;
  for (std::size_t i = 0; i < exponent; ++i) out *= base;
  return out;
}

double log_z_log_domain(const PottsModel& model, const ParamVector& theta, std::size_t states) {
  const std::size_t k = static_cast<std::size_t>(model.num_states());
  const std::size_t h = model.height();
  const std::size_t w = model.width();
  const std::size_t prefix = states / k;                      // K^{h-1}
  const std::size_t up_stride = h >= 2 ? prefix / k : 1;      // K^{h-2}
  const auto alpha = model.node_weights(theta);
  const double beta = model.coupling(theta);

  // Digit j of a boundary index is the state of the j-th oldest boundary site;
  // digit 0 leaves when a site is added, digit h-1 is the site just above.
  std::vector<double> weights(states, kNegInf), next(states);
  weights[0] = 0.0;  // phantom all-zero boundary before the first column
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      const bool has_up = r > 0;
      const bool has_left = c > 0;
      for (std::size_t x = 0; x < k; ++x) {
        for (std::size_t m = 0; m < prefix; ++m) {
          double acc = kNegInf;
          for (std::size_t leaving = 0; leaving < k; ++leaving) {
            const double bond = (has_left && leaving == x) ? beta : 0.0;
            acc = log_add_exp(acc, weights[m * k + leaving] + bond);
          }
          const std::size_t up = (m / up_stride) % k;
          const double up_bond = (has_up && up == x) ? beta : 0.0;
          next[x * prefix + m] = acc + alpha[x] + up_bond;
        }
      }
      weights.swap(next);
    }
  }
  return log_sum_exp(weights);
}

double log_z_scaled(const PottsModel& model, const ParamVector& theta, std::size_t states) {
  const std::size_t h = model.height();
  const std::size_t w = model.width();
  const double alpha = theta[0];
  const double beta = theta[1];
  std::vector<double> weights(states, 0.0), next(states);
  weights[0] = 1.0;
  double log_scale = 0.0;
  double previous_max = 1.0;
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      const bool has_up = r > 0;
      const bool has_left = c > 0;
      simd::TransferCoefficients coeff{};
      for (int x = 0; x < 2; ++x) {
        const double node = x == 1 ? alpha : -alpha;
        for (int up = 0; up < 2; ++up) {
          for (int left = 0; left < 2; ++left) {
            const double exponent =
                node + beta * ((has_up && up == x ? 1.0 : 0.0) + (has_left && left == x ? 1.0 : 0.0));
            coeff.coeff[x][up][left] = std::exp(exponent) / previous_max;
          }
        }
      }
      const double max_weight = simd::transfer_step_k2(weights, next, coeff);
      log_scale += std::log(previous_max);
      previous_max = max_weight;
      weights.swap(next);
    }
  }
  double total = 0.0;
  for (double v : weights) total += v;
  return log_scale + std::log(total);
}

}  // namespace

double exact_log_z_potts(const PottsModel& model, const ParamVector& theta, TransferRoute route,
                         const OracleLimits& limits) {
  require_dimension(theta, model.dimension(), "exact_log_z_potts");
  if (!theta.allFinite()) throw std::invalid_argument("exact_log_z_potts: non-finite θ");
  const std::size_t states =
      checked_power(static_cast<std::size_t>(model.num_states()), model.height(),
                    limits.max_boundary_bits, "partition recursion");
  const bool two_state = model.num_states() == 2;
  if (route == TransferRoute::scaled && !two_state) {
    throw std::invalid_argument("scaled transfer route supports K = 2 only");
  }
  if (route == TransferRoute::automatic) {
    // exp of the largest local exponent must stay finite in the scaled route.
    const bool safe = two_state && std::abs(theta[0]) + 2.0 * std::abs(theta[1]) < 300.0;
    route = safe ? TransferRoute::scaled : TransferRoute::log_domain;
  }
  return route == TransferRoute::scaled ? log_z_scaled(model, theta, states)
                                        : log_z_log_domain(model, theta, states);
}

Configuration exact_sample_potts(const PottsModel& model, const ParamVector& theta, Rng& rng,
                                 const OracleLimits& limits) {
  require_dimension(theta, model.dimension(), "exact_sample_potts");
  const std::size_t k = static_cast<std::size_t>(model.num_states());
  const std::size_t h = model.height();
  const std::size_t sites = model.site_count();
  const std::size_t states = checked_power(k, h, limits.max_boundary_bits, "exact sampling");
  if (static_cast<double>(states) * static_cast<double>(sites + 1) > limits.max_sampler_table) {
    throw ResourceLimit("exact sampling table of " + std::to_string(sites + 1) + " x " +
                        std::to_string(states) + " entries exceeds the cap");
  }
  const std::size_t prefix = states / k;
  const std::size_t up_stride = h >= 2 ? prefix / k : 1;
  const auto alpha = model.node_weights(theta);
  const double beta = model.coupling(theta);

  // Forward pass, keeping every intermediate boundary table (row t+1 follows site t).
  std::vector<double> table((sites + 1) * states, kNegInf);
  table[0] = 0.0;
  for (std::size_t t = 0; t < sites; ++t) {
    const bool has_up = t % h != 0;
    const bool has_left = t >= h;
    const double* prev = &table[t * states];
    double* next = &table[(t + 1) * states];
    for (std::size_t x = 0; x < k; ++x) {
      for (std::size_t m = 0; m < prefix; ++m) {
        double acc = kNegInf;
        for (std::size_t leaving = 0; leaving < k; ++leaving) {
          acc = log_add_exp(acc, prev[m * k + leaving] + ((has_left && leaving == x) ? beta : 0.0));
        }
        const std::size_t up = (m / up_stride) % k;
        next[x * prefix + m] = acc + alpha[x] + ((has_up && up == x) ? beta : 0.0);
      }
    }
  }

  auto draw = [&rng](std::span<const double> log_w) {
    const double total = log_sum_exp(log_w);
    double u = uniform01(rng);
    for (std::size_t i = 0; i < log_w.size(); ++i) {
      u -= std::exp(log_w[i] - total);
      if (u < 0.0) return i;
    }
    // Rounding left a sliver: take the last index with positive mass.
    std::size_t last = 0;
    for (std::size_t i = 0; i < log_w.size(); ++i) if (log_w[i] > kNegInf) last = i;
    return last;
  };

  // Backward pass: the final boundary, then each leaving site given the one after it.
  Configuration x(sites);
  std::size_t boundary = draw({&table[sites * states], states});
  std::vector<double> leaving_w(k);
  for (std::size_t t = sites; t-- > 0;) {
    const std::size_t state = boundary / prefix;
    const std::size_t m = boundary % prefix;
    x[t] = static_cast<SiteState>(state);
    const bool has_left = t >= h;
    const double* prev = &table[t * states];
    for (std::size_t leaving = 0; leaving < k; ++leaving) {
      leaving_w[leaving] = prev[m * k + leaving] + ((has_left && leaving == state) ? beta : 0.0);
    }
    boundary = m * k + draw(leaving_w);
  }
  return x;
}

// ---------------------------------------------------------------------------

EnumeratedModel::EnumeratedModel(const GibbsModel& model, const OracleLimits& limits)
    : dimension_(model.dimension()) {
  const auto k = static_cast<std::size_t>(model.num_states());
  const std::size_t sites = model.site_count();
  configurations_ = checked_power(k, sites, limits.max_enumeration_bits, "enumeration");
  std::map<std::vector<long long>, std::size_t> histogram;
  Configuration x(sites, 0);
  std::vector<long long> key(dimension_);
  for (std::size_t counter = 0; counter < configurations_; ++counter) {
    const SuffStats s = model.suff_stats_unchecked(x);
    for (std::size_t i = 0; i < dimension_; ++i) key[i] = std::llround(s[static_cast<Eigen::Index>(i)]);
    ++histogram[key];
    for (std::size_t site = 0; site < sites; ++site) {  // odometer increment
      if (++x[site] < k) break;
      x[site] = 0;
    }
  }
  stats_.resize(static_cast<Eigen::Index>(dimension_), static_cast<Eigen::Index>(histogram.size()));
  log_counts_.reserve(histogram.size());
  Eigen::Index col = 0;
  for (const auto& [stat, count] : histogram) {
    for (std::size_t i = 0; i < dimension_; ++i) stats_(static_cast<Eigen::Index>(i), col) = static_cast<double>(stat[i]);
    log_counts_.push_back(std::log(static_cast<double>(count)));
    ++col;
  }
}

std::vector<double> EnumeratedModel::log_weights(const ParamVector& theta) const {
  require_dimension(theta, dimension_, "enumeration");
  const Eigen::RowVectorXd potentials = theta.transpose() * stats_;
  std::vector<double> out(log_counts_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = log_counts_[i] + potentials[static_cast<Eigen::Index>(i)];
  return out;
}

double EnumeratedModel::log_z(const ParamVector& theta) const { return log_sum_exp(log_weights(theta)); }

double EnumeratedModel::expectation(const ParamVector& theta,
                                    const std::function<double(const Vector&)>& g) const {
  const auto lw = log_weights(theta);
  const double lz = log_sum_exp(lw);
  double total = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i) {
    total += std::exp(lw[i] - lz) * g(stats_.col(static_cast<Eigen::Index>(i)));
  }
  return total;
}

Vector EnumeratedModel::expected_stats(const ParamVector& theta) const {
  const auto lw = log_weights(theta);
  const double lz = log_sum_exp(lw);
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(dimension_));
  for (std::size_t i = 0; i < lw.size(); ++i) mean += std::exp(lw[i] - lz) * stats_.col(static_cast<Eigen::Index>(i));
  return mean;
}

Matrix EnumeratedModel::stats_covariance(const ParamVector& theta) const {
  const auto lw = log_weights(theta);
  const double lz = log_sum_exp(lw);
  const Vector mean = expected_stats(theta);
  const auto d = static_cast<Eigen::Index>(dimension_);
  Matrix cov = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < lw.size(); ++i) {
    const Vector diff = stats_.col(static_cast<Eigen::Index>(i)) - mean;
    cov += std::exp(lw[i] - lz) * diff * diff.transpose();
  }
  return cov;
}

double brute_force_log_z(const GibbsModel& model, const ParamVector& theta,
                         const OracleLimits& limits) {
  return EnumeratedModel(model, limits).log_z(theta);
}

LogPartitionFn exact_log_partition(const GibbsModel& model, const OracleLimits& limits) {
  if (const auto* potts = dynamic_cast<const PottsModel*>(&model)) {
    const PottsModel copy = *potts;
    // Surface the resource check now rather than at first use.
    checked_power(static_cast<std::size_t>(copy.num_states()), copy.height(),
                  limits.max_boundary_bits, "partition recursion");
    return [copy, limits](const ParamVector& theta) {
      return exact_log_z_potts(copy, theta, TransferRoute::automatic, limits);
    };
  }
  auto enumerated = std::make_shared<const EnumeratedModel>(model, limits);
  return [enumerated](const ParamVector& theta) { return enumerated->log_z(theta); };
}

Vector exact_grad_log_z(const LogPartitionFn& log_z, const ParamVector& theta, double step) {
  Vector grad(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    ParamVector plus = theta, minus = theta;
    plus[i] += step;
    minus[i] -= step;
    grad[i] = (log_z(plus) - log_z(minus)) / (2.0 * step);
  }
  return grad;
}

Matrix exact_hessian_log_z(const LogPartitionFn& log_z, const ParamVector& theta, double step) {
  const auto d = theta.size();
  Matrix hess(d, d);
  const double center = log_z(theta);
  auto shifted = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    ParamVector t = theta;
    t[i] += si * step;
    t[j] += sj * step;
    return log_z(t);
  };
  for (Eigen::Index i = 0; i < d; ++i) {
    hess(i, i) = (shifted(i, 1, i, 0) - 2.0 * center + shifted(i, -1, i, 0)) / (step * step);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      hess(i, j) = (shifted(i, 1, j, 1) - shifted(i, 1, j, -1) - shifted(i, -1, j, 1) +
                    shifted(i, -1, j, -1)) / (4.0 * step * step);
      hess(j, i) = hess(i, j);
    }
  }
  return hess;
}

double exact_log_ratio(const LogPartitionFn& log_z, const ParamVector& theta,
                       const ParamVector& theta_prime) {
  return log_z(theta) - log_z(theta_prime);
}

ExactNormalizer::ExactNormalizer(LogPartitionFn log_z, double gradient_step)
    : log_z_(std::move(log_z)), step_(gradient_step) {}

VisitedPoint ExactNormalizer::visit(const ParamVector& theta, Rng&) const {
  VisitedPoint point;
  point.theta = theta;
  point.mean_stats = exact_grad_log_z(log_z_, theta, step_);
  return point;
}

double ExactNormalizer::log_ratio(const ParamVector& previous, const VisitedPoint& current) const {
  return exact_log_ratio(log_z_, previous, current.theta);
}

// ---------------------------------------------------------------------------

PosteriorGrid::PosteriorGrid(LogDensityFn log_unnormalized, Vector lower, Vector upper,
                             std::size_t resolution)
    : log_unnormalized_(std::move(log_unnormalized)),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      resolution_(resolution) {
  if (lower_.size() != 2 || upper_.size() != 2) {
    throw DimensionMismatch("posterior grid supports two parameters");
  }
  if (resolution_ == 0) throw std::invalid_argument("grid resolution must be positive");
  values_.resize(resolution_ * resolution_);
  for (std::size_t i = 0; i < resolution_; ++i)
    for (std::size_t j = 0; j < resolution_; ++j)
      values_[i * resolution_ + j] = log_unnormalized_(node(i, j));
  log_evidence_ = log_sum_exp(values_) + std::log(cell_area());
}

double PosteriorGrid::cell_area() const noexcept {
  const double n = static_cast<double>(resolution_);
  return (upper_[0] - lower_[0]) / n * (upper_[1] - lower_[1]) / n;
}

ParamVector PosteriorGrid::node(std::size_t i, std::size_t j) const {
  const double n = static_cast<double>(resolution_);
  ParamVector t(2);
  t[0] = lower_[0] + (static_cast<double>(i) + 0.5) * (upper_[0] - lower_[0]) / n;
  t[1] = lower_[1] + (static_cast<double>(j) + 0.5) * (upper_[1] - lower_[1]) / n;
  return t;
}

double PosteriorGrid::log_density(const ParamVector& theta) const {
  return log_unnormalized_(theta) - log_evidence_;
}

double PosteriorGrid::total_mass() const {
  double total = 0.0;
  for (double v : values_) total += std::exp(v - log_evidence_);
  return total * cell_area();
}

Vector PosteriorGrid::mean() const {
  Vector m = Vector::Zero(2);
  for (std::size_t i = 0; i < resolution_; ++i)
    for (std::size_t j = 0; j < resolution_; ++j)
      m += std::exp(log_value(i, j) - log_evidence_) * node(i, j);
  return m * cell_area();
}

Matrix PosteriorGrid::covariance() const {
  const Vector m = mean();
  Matrix c = Matrix::Zero(2, 2);
  for (std::size_t i = 0; i < resolution_; ++i)
    for (std::size_t j = 0; j < resolution_; ++j) {
      const Vector diff = node(i, j) - m;
      c += std::exp(log_value(i, j) - log_evidence_) * diff * diff.transpose();
    }
  return c * cell_area();
}

ParamVector PosteriorGrid::argmax() const {
  const auto best = std::max_element(values_.begin(), values_.end()) - values_.begin();
  const auto idx = static_cast<std::size_t>(best);
  return node(idx / resolution_, idx % resolution_);
}

void PosteriorGrid::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "theta_1,theta_2,log_density\n";
  for (std::size_t i = 0; i < resolution_; ++i)
    for (std::size_t j = 0; j < resolution_; ++j) {
      const auto t = node(i, j);
      out << t[0] << ',' << t[1] << ',' << log_value(i, j) - log_evidence_ << '\n';
    }
}

std::vector<ParamVector> PosteriorGrid::sample(std::size_t count, Rng& rng) const {
  std::vector<double> cumulative(values_.size());
  double running = 0.0;
  const double peak = *std::max_element(values_.begin(), values_.end());
  for (std::size_t i = 0; i < values_.size(); ++i) cumulative[i] = (running += std::exp(values_[i] - peak));
  const double width0 = (upper_[0] - lower_[0]) / static_cast<double>(resolution_);
  const double width1 = (upper_[1] - lower_[1]) / static_cast<double>(resolution_);
  std::vector<ParamVector> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double u = uniform01(rng) * running;
    auto cell = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    cell = std::min(cell, values_.size() - 1);
    ParamVector t(2);
    t[0] = lower_[0] + (static_cast<double>(cell / resolution_) + uniform01(rng)) * width0;
    t[1] = lower_[1] + (static_cast<double>(cell % resolution_) + uniform01(rng)) * width1;
    out.push_back(std::move(t));
  }
  return out;
}

PosteriorGrid exact_posterior_grid(const LogPartitionFn& log_z, const SuffStats& observed_stats,
                                   const Prior& box_prior, std::size_t resolution) {
  if (box_prior.kind() != Prior::Kind::box) {
    throw ConfigError("exact posterior grid needs a bounded (box) prior");
  }
  return exact_posterior_grid(log_z, observed_stats, box_prior, box_prior.lower(),
                              box_prior.upper(), resolution);
}

PosteriorGrid exact_posterior_grid(const LogPartitionFn& log_z, const SuffStats& observed_stats,
                                   const Prior& prior, const Vector& lower, const Vector& upper,
                                   std::size_t resolution) {
  if (!lower.allFinite() || !upper.allFinite()) {
    throw ConfigError("posterior grid needs a finite integration box");
  }
  auto log_unnormalized = [log_z, observed_stats, prior](const ParamVector& theta) {
    return theta.dot(observed_stats) - log_z(theta) + prior.log_density(theta);
  };
  return PosteriorGrid(log_unnormalized, lower, upper, resolution);
}

Vector posterior_mean_quadrature(const GibbsModel& model, std::span<const SiteState> observed,
                                 const Prior& box_prior, std::size_t resolution) {
  const SuffStats stats = model.suff_stats(observed);
  return exact_posterior_grid(exact_log_partition(model), stats, box_prior, resolution).mean();
}

KlResult kl_divergence_binned(std::span<const ParamVector> samples, const PosteriorGrid& posterior,
                              double bin_size) {
  if (samples.empty()) throw std::invalid_argument("KL needs at least one sample");
  if (!(bin_size > 0)) throw std::invalid_argument("bin size must be positive");
  const Vector& lo = posterior.lower();
  const Vector& hi = posterior.upper();
  std::size_t bins[2];
  for (int a = 0; a < 2; ++a) {
    bins[a] = static_cast<std::size_t>(std::ceil((hi[a] - lo[a]) / bin_size - 1e-9));
  }
  std::unordered_map<std::size_t, std::size_t> counts;
  for (const auto& t : samples) {
    std::size_t idx[2];
    for (int a = 0; a < 2; ++a) {
      if (t[a] < lo[a] || t[a] > hi[a]) throw OutsideSupport("KL sample outside the posterior box");
      idx[a] = std::min(bins[a] - 1, static_cast<std::size_t>((t[a] - lo[a]) / bin_size));
    }
    ++counts[idx[0] * bins[1] + idx[1]];
  }
  // Sum in bin order so the result does not depend on hash-table iteration.
  std::vector<std::pair<std::size_t, std::size_t>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end());
  KlResult out;
  out.occupied_bins = ordered.size();
  const double n = static_cast<double>(samples.size());
  for (const auto& [key, count] : ordered) {
    const std::size_t idx[2] = {key / bins[1], key % bins[1]};
    ParamVector center(2);
    double area = 1.0;
    for (int a = 0; a < 2; ++a) {
      const double left = lo[a] + static_cast<double>(idx[a]) * bin_size;
      const double right = std::min(hi[a], left + bin_size);
      center[a] = 0.5 * (left + right);
      area *= right - left;
    }
    const double q = static_cast<double>(count) / n;
    const double log_pi = posterior.log_density(center) + std::log(area);
    if (!std::isfinite(log_pi)) {
      out.divergent = true;
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
    out.value += q * (std::log(q) - log_pi);
  }
  return out;
}

}  // namespace nhmc
