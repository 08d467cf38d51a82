#include "nhmc/posterior.hpp"

#include "nhmc/numerics.hpp"

#include <cmath>
#include <sstream>

namespace nhmc {

Prior Prior::flat(std::size_t dimension) {
  Prior p;
  p.kind_ = Kind::flat;
  p.dimension_ = dimension;
  p.lower_ = Vector::Constant(dimension, -std::numeric_limits<double>::infinity());
  p.upper_ = Vector::Constant(dimension, std::numeric_limits<double>::infinity());
  return p;
}

Prior Prior::box(Vector lower, Vector upper) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw DimensionMismatch("prior box bounds must have equal, positive length");
  }
  if (!((upper - lower).array() > 0).all() || !lower.allFinite() || !upper.allFinite()) {
    throw ConfigError("prior box must be finite and non-degenerate");
  }
  Prior p;
  p.kind_ = Kind::box;
  p.dimension_ = static_cast<std::size_t>(lower.size());
  p.log_norm_ = -(upper - lower).array().log().sum();
  p.lower_ = std::move(lower);
  p.upper_ = std::move(upper);
  return p;
}

Prior Prior::gaussian(Vector mean, Matrix covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw DimensionMismatch("Gaussian prior covariance shape");
  }
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) throw ConfigError("Gaussian prior covariance is not SPD");
  Prior p = flat(static_cast<std::size_t>(mean.size()));
  p.kind_ = Kind::gaussian;
  p.precision_ = llt.solve(Matrix::Identity(mean.size(), mean.size()));
  const Matrix l = llt.matrixL();
  p.log_norm_ = -0.5 * static_cast<double>(mean.size()) * std::log(2.0 * M_PI) -
                l.diagonal().array().log().sum();
  p.mean_ = std::move(mean);
  return p;
}

bool Prior::contains(const ParamVector& theta) const {
  require_dimension(theta, dimension_, "prior");
  if (!theta.allFinite()) return false;
  if (kind_ != Kind::box) return true;
  return ((theta - lower_).array() >= 0).all() && ((upper_ - theta).array() >= 0).all();
}

double Prior::log_density(const ParamVector& theta) const {
  if (!contains(theta)) return kNegInf;
  switch (kind_) {
    case Kind::flat: return 0.0;
    case Kind::box: return log_norm_;
    case Kind::gaussian: {
      const Vector diff = theta - mean_;
      return log_norm_ - 0.5 * diff.dot(precision_ * diff);
    }
  }
  return kNegInf;
}

Vector Prior::gradient(const ParamVector& theta) const {
  require_dimension(theta, dimension_, "prior gradient");
  if (kind_ == Kind::gaussian) return -(precision_ * (theta - mean_));
  return Vector::Zero(static_cast<Eigen::Index>(dimension_));
}

Matrix Prior::hessian(const ParamVector& theta) const {
  require_dimension(theta, dimension_, "prior hessian");
  if (kind_ == Kind::gaussian) return -precision_;
  const auto d = static_cast<Eigen::Index>(dimension_);
  return Matrix::Zero(d, d);
}

ParamVector Prior::project(const ParamVector& theta) const {
  if (kind_ != Kind::box) return theta;
  return theta.cwiseMax(lower_).cwiseMin(upper_);
}

std::string Prior::describe() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind_) {
    case Kind::flat: out << "flat"; break;
    case Kind::box:
      out << "box";
      for (Eigen::Index i = 0; i < lower_.size(); ++i) out << " [" << lower_[i] << "," << upper_[i] << "]";
      break;
    case Kind::gaussian: out << "gaussian"; break;
  }
  return out.str();
}

Posterior Posterior::make(std::shared_ptr<const GibbsModel> model, Configuration observed,
                          Prior prior, std::size_t sweeps) {
  if (!model) throw std::invalid_argument("Posterior needs a model");
  if (prior.dimension() != model->dimension()) {
    throw DimensionMismatch("prior dimension does not match the model");
  }
  if (sweeps == 0) throw ConfigError("forward sampler needs at least one sweep");
  Posterior p;
  p.observed_stats = model->suff_stats(observed);
  p.model = std::move(model);
  p.observed = std::move(observed);
  p.prior = std::move(prior);
  p.sweeps = sweeps;
  return p;
}

}  // namespace nhmc
