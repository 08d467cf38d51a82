#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Model parameter θ ∈ ℝᵈ.
using ParamVector = Eigen::VectorXd;

/// Sufficient statistic s(x) ∈ ℝᵈ, so that the potential is θᵀs(x).
using SuffStats = Eigen::VectorXd;

/// One site of a random field realization: a lattice state or a dyad indicator.
using SiteState = std::uint8_t;

/// A realization x of a Gibbs random field, stored site by site in the model's scan order.
using Configuration = std::vector<SiteState>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfiguration : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ResourceLimit : public Error {
 public:
  using Error::Error;
};

class OutsideSupport : public Error {
 public:
  using Error::Error;
};

class SingularPrecision : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IntegrationFailure : public Error {
 public:
  IntegrationFailure(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

inline void require_dimension(const Eigen::Ref<const Vector>& v, std::size_t d,
                              const char* what) {
  if (static_cast<std::size_t>(v.size()) != d) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(d) +
                            ", got " + std::to_string(v.size()));
  }
}

inline bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }

}  // namespace nhmc
