#pragma once

#include "nhmc/core.hpp"
#include "nhmc/rng.hpp"

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nhmc {

/// Linear exponential-family Gibbs random field: f(x|θ) = exp{θᵀs(x)} / Z(θ).
/// Models are immutable after construction and may be shared across threads.
class GibbsModel {
 public:
  virtual ~GibbsModel() = default;

  virtual std::string name() const = 0;
  /// d, the length of θ and s(x).
  virtual std::size_t dimension() const = 0;
  /// Number of sites (lattice cells or dyads) in one configuration.
  virtual std::size_t site_count() const = 0;
  virtual int num_states() const = 0;

  /// Throws InvalidConfiguration on a size or state-range mismatch.
  virtual void validate(std::span<const SiteState> x) const;

  /// s(x) after validating x.
  SuffStats suff_stats(std::span<const SiteState> x) const;
  /// s(x) for configurations known to be valid (sampler output).
  virtual SuffStats suff_stats_unchecked(std::span<const SiteState> x) const = 0;

  /// θᵀs(x).
  double potential(const ParamVector& theta, std::span<const SiteState> x) const;

  /// Full conditional p(x_site = k | rest) for k = 0..K-1, written into probs.
  virtual void site_conditional(const ParamVector& theta, std::span<const SiteState> x,
                                std::size_t site, std::span<double> probs) const = 0;

  /// Resamples one site from its full conditional (one uniform, inverse CDF).
  void gibbs_site_update(const ParamVector& theta, std::span<SiteState> x, std::size_t site,
                         Rng& rng) const;

  /// One update per site in fixed lexicographic order.
  virtual void gibbs_sweep(const ParamVector& theta, std::span<SiteState> x, Rng& rng) const;

  /// Every site drawn uniformly from {0..K-1}.
  Configuration random_configuration(Rng& rng) const;

  /// Range invariants of s(x) for this model.
  virtual bool stats_within_bounds(const SuffStats& s) const = 0;
};

// ---------------------------------------------------------------------------
// Potts lattice

/// K-state Potts model on an h×w lattice with first-order (4-nearest, free
/// boundary) neighbourhood. Sites are stored column by column: site = col*h + row.
/// θ = (α_1, …, α_{K-1}, β) with α_0 = -Σα_k; for K = 2, θ = (α, β) and
/// s(x) = (#ones - #zeros, #agreeing neighbour pairs).
class PottsModel final : public GibbsModel {
 public:
  PottsModel(std::size_t height, std::size_t width, int states = 2);

  std::string name() const override;
  std::size_t dimension() const override { return static_cast<std::size_t>(states_); }
  std::size_t site_count() const override { return height_ * width_; }
  int num_states() const override { return states_; }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t edge_count() const noexcept;
  std::size_t site_index(std::size_t row, std::size_t col) const noexcept {
    return col * height_ + row;
  }

  /// Node potentials (α_0, …, α_{K-1}) under the sum-to-zero constraint.
  std::vector<double> node_weights(const ParamVector& theta) const;
  double coupling(const ParamVector& theta) const { return theta[states_ - 1]; }

  SuffStats suff_stats_unchecked(std::span<const SiteState> x) const override;
  void site_conditional(const ParamVector& theta, std::span<const SiteState> x,
                        std::size_t site, std::span<double> probs) const override;
  void gibbs_sweep(const ParamVector& theta, std::span<SiteState> x, Rng& rng) const override;
  bool stats_within_bounds(const SuffStats& s) const override;

 private:
  std::size_t height_;
  std::size_t width_;
  int states_;
};

/// A realized lattice plus its shape.
struct LatticeConfig {
  std::size_t height = 0;
  std::size_t width = 0;
  int states = 2;
  Configuration sites;  // column-major

  /// Builds from row-major rows of states.
  static LatticeConfig from_rows(const std::vector<std::vector<int>>& rows, int states);
  std::vector<std::vector<int>> to_rows() const;
};

/// Whitespace-separated integers, one lattice row per line; `#` starts a comment.
LatticeConfig read_lattice(const std::filesystem::path& path, int states);
void write_lattice(const std::filesystem::path& path, const LatticeConfig& lattice);

// ---------------------------------------------------------------------------
// Exponential random graph model

/// Undirected ERGM on n nodes with edge and 2-star statistics, θ = (θ_edge, θ_2star).
/// Sites are the dyads (i<j) in lexicographic order.
class ErgmModel final : public GibbsModel {
 public:
  explicit ErgmModel(std::size_t nodes);

  std::string name() const override;
  std::size_t dimension() const override { return 2; }
  std::size_t site_count() const override { return dyads_.size(); }
  int num_states() const override { return 2; }

  std::size_t nodes() const noexcept { return nodes_; }
  std::size_t dyad_index(std::size_t i, std::size_t j) const;
  std::pair<std::size_t, std::size_t> dyad(std::size_t index) const { return dyads_[index]; }

  SuffStats suff_stats_unchecked(std::span<const SiteState> x) const override;
  void site_conditional(const ParamVector& theta, std::span<const SiteState> x,
                        std::size_t site, std::span<double> probs) const override;
  void gibbs_sweep(const ParamVector& theta, std::span<SiteState> x, Rng& rng) const override;
  bool stats_within_bounds(const SuffStats& s) const override;

 private:
  std::size_t nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> dyads_;
};

/// Symmetric binary adjacency matrix with zero diagonal.
struct GraphConfig {
  std::size_t nodes = 0;
  std::vector<std::uint8_t> adjacency;  // row-major n×n

  static GraphConfig empty(std::size_t nodes);
  static GraphConfig complete(std::size_t nodes);
  static GraphConfig from_dyads(const ErgmModel& model, std::span<const SiteState> x);

  bool edge(std::size_t i, std::size_t j) const { return adjacency[i * nodes + j] != 0; }
  void set_edge(std::size_t i, std::size_t j, bool on);
  /// Throws InvalidConfiguration if asymmetric or with self-loops.
  void validate() const;
  Configuration to_dyads(const ErgmModel& model) const;
};

/// Edge list with a `n <count>` header line, 1-based `i j` pairs, `#` comments.
GraphConfig read_edge_list(const std::filesystem::path& path);
void write_edge_list(const std::filesystem::path& path, const GraphConfig& graph);

// ---------------------------------------------------------------------------

/// N independent draws from f(·|θ): each starts uniformly at random and runs
/// `sweeps` Gibbs sweeps. Draw k uses a sub-stream seeded from (one word of rng, k),
/// so results do not depend on how draws are spread over threads.
std::vector<Configuration> forward_sample(const GibbsModel& model, const ParamVector& theta,
                                          std::size_t count, std::size_t sweeps, Rng& rng);

/// As above, but every chain starts from `start` instead of a uniform draw.
std::vector<Configuration> forward_sample_from(const GibbsModel& model, const ParamVector& theta,
                                               std::span<const SiteState> start, std::size_t count,
                                               std::size_t sweeps, Rng& rng);

}  // namespace nhmc
