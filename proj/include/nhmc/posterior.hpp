#pragma once

#include "nhmc/core.hpp"
#include "nhmc/gibbs_models.hpp"

#include <memory>
#include <string>

namespace nhmc {

/// Prior p(θ): flat (improper) over ℝᵈ, uniform on a box, or Gaussian.
class Prior {
 public:
  enum class Kind { flat, box, gaussian };

  static Prior flat(std::size_t dimension);
  static Prior box(Vector lower, Vector upper);
  static Prior gaussian(Vector mean, Matrix covariance);

  Kind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return dimension_; }

  bool contains(const ParamVector& theta) const;
  /// -inf outside the support.
  double log_density(const ParamVector& theta) const;
  /// ∇ log p; zero for flat and box priors (inside the box).
  Vector gradient(const ParamVector& theta) const;
  Matrix hessian(const ParamVector& theta) const;

  /// Box bounds; ±inf for unbounded kinds.
  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }
  /// Componentwise clamp into the support (identity for unbounded priors).
  ParamVector project(const ParamVector& theta) const;

  std::string describe() const;

 private:
  Prior() = default;
  Kind kind_ = Kind::flat;
  std::size_t dimension_ = 0;
  Vector lower_, upper_;
  Vector mean_;
  Matrix precision_;
  double log_norm_ = 0.0;
};

/// π(θ|x) ∝ exp{θᵀs(x)} / Z(θ) · p(θ), with the forward-sampler settings used to
/// simulate auxiliary draws.
struct Posterior {
  std::shared_ptr<const GibbsModel> model;
  Configuration observed;
  SuffStats observed_stats;
  Prior prior = Prior::flat(0);
  std::size_t sweeps = 200;
  /// Auxiliary chains start uniformly at random unless this is set; starting at
  /// the observation avoids metastable dense phases in near-degenerate ERGMs.
  bool start_at_observed = false;

  static Posterior make(std::shared_ptr<const GibbsModel> model, Configuration observed,
                        Prior prior, std::size_t sweeps);

  std::size_t dimension() const { return model->dimension(); }
};

}  // namespace nhmc
