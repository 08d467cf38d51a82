#include "nhmc/gibbs_models.hpp"

#include "nhmc/parallel.hpp"
#include "nhmc/simd/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace nhmc {

void GibbsModel::validate(std::span<const SiteState> x) const {
  if (x.size() != site_count()) {
    throw InvalidConfiguration(name() + ": configuration has " + std::to_string(x.size()) +
                               " sites, expected " + std::to_string(site_count()));
  }
  const auto k = num_states();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= k) {
      throw InvalidConfiguration(name() + ": site " + std::to_string(i) + " has state " +
                                 std::to_string(x[i]) + " outside [0, " +
                                 std::to_string(k - 1) + "]");
    }
  }
}

SuffStats GibbsModel::suff_stats(std::span<const SiteState> x) const {
  validate(x);
  return suff_stats_unchecked(x);
}

double GibbsModel::potential(const ParamVector& theta, std::span<const SiteState> x) const {
  require_dimension(theta, dimension(), "potential");
  return theta.dot(suff_stats(x));
}

void GibbsModel::gibbs_site_update(const ParamVector& theta, std::span<SiteState> x,
                                   std::size_t site, Rng& rng) const {
  if (site >= site_count()) {
    throw std::out_of_range("gibbs_site_update: site " + std::to_string(site));
  }
  std::array<double, 256> probs{};
  const auto k = static_cast<std::size_t>(num_states());
  site_conditional(theta, x, site, std::span<double>(probs.data(), k));
  const double u = uniform01(rng);
  double cumulative = 0.0;
  SiteState chosen = static_cast<SiteState>(k - 1);
  for (std::size_t s = 0; s + 1 < k; ++s) {
    cumulative += probs[s];
    if (u < cumulative) {
      chosen = static_cast<SiteState>(s);
      break;
    }
  }
  x[site] = chosen;
}

void GibbsModel::gibbs_sweep(const ParamVector& theta, std::span<SiteState> x, Rng& rng) const {
  for (std::size_t site = 0; site < site_count(); ++site) gibbs_site_update(theta, x, site, rng);
}

Configuration GibbsModel::random_configuration(Rng& rng) const {
  Configuration x(site_count());
  const auto k = static_cast<std::uint64_t>(num_states());
  for (auto& s : x) s = static_cast<SiteState>(static_cast<std::uint64_t>(uniform01(rng) * k));
  return x;
}

// ---------------------------------------------------------------------------
// Potts

PottsModel::PottsModel(std::size_t height, std::size_t width, int states)
    : height_(height), width_(width), states_(states) {
  if (height == 0 || width == 0) throw InvalidConfiguration("Potts lattice must be non-empty");
  if (states < 2 || states > 255) throw InvalidConfiguration("Potts model needs 2..255 states");
}

std::string PottsModel::name() const {
  return "potts(" + std::to_string(height_) + "x" + std::to_string(width_) + ",K=" +
         std::to_string(states_) + ")";
}

std::size_t PottsModel::edge_count() const noexcept {
  return height_ * (width_ - 1) + width_ * (height_ - 1);
}

std::vector<double> PottsModel::node_weights(const ParamVector& theta) const {
  std::vector<double> alpha(static_cast<std::size_t>(states_), 0.0);
  for (int k = 1; k < states_; ++k) {
    alpha[static_cast<std::size_t>(k)] = theta[k - 1];
    alpha[0] -= theta[k - 1];
  }
  return alpha;
}

SuffStats PottsModel::suff_stats_unchecked(std::span<const SiteState> x) const {
  SuffStats s = SuffStats::Zero(states_);
  std::vector<std::size_t> counts(static_cast<std::size_t>(states_), 0);
  for (SiteState v : x) ++counts[v];
  for (int k = 1; k < states_; ++k) {
    s[k - 1] = static_cast<double>(counts[static_cast<std::size_t>(k)]) -
               static_cast<double>(counts[0]);
  }
  const std::size_t n = x.size();
  // Horizontal pairs are (i, i+h); vertical pairs are (i, i+1) except across columns.
  std::size_t agree = simd::count_equal(x.first(n - height_), x.subspan(height_));
  std::size_t vertical = simd::count_equal(x.first(n - 1), x.subspan(1));
  for (std::size_t c = 0; c + 1 < width_; ++c) {
    const std::size_t last = c * height_ + height_ - 1;
    vertical -= (x[last] == x[last + 1]);
  }
  s[states_ - 1] = static_cast<double>(agree + vertical);
  return s;
}

void PottsModel::site_conditional(const ParamVector& theta, std::span<const SiteState> x,
                                  std::size_t site, std::span<double> probs) const {
  require_dimension(theta, dimension(), "site_conditional");
  const auto alpha = node_weights(theta);
  const double beta = coupling(theta);
  const std::size_t row = site % height_;
  const std::size_t col = site / height_;
  std::array<int, 256> neighbours{};
  if (row > 0) ++neighbours[x[site - 1]];
  if (row + 1 < height_) ++neighbours[x[site + 1]];
  if (col > 0) ++neighbours[x[site - height_]];
  if (col + 1 < width_) ++neighbours[x[site + height_]];
  double max_logit = -INFINITY;
  for (int k = 0; k < states_; ++k) {
    probs[k] = alpha[static_cast<std::size_t>(k)] + beta * neighbours[static_cast<std::size_t>(k)];
    max_logit = std::max(max_logit, probs[k]);
  }
  double total = 0.0;
  for (int k = 0; k < states_; ++k) total += (probs[k] = std::exp(probs[k] - max_logit));
  for (int k = 0; k < states_; ++k) probs[k] /= total;
}

void PottsModel::gibbs_sweep(const ParamVector& theta, std::span<SiteState> x, Rng& rng) const {
  if (states_ != 2) {
    GibbsModel::gibbs_sweep(theta, x, rng);
    return;
  }
  // p(x_i = 0 | rest) depends only on (#ones - #zeros) among the neighbours.
  const double alpha = theta[0];
  const double beta = theta[1];
  std::array<double, 9> prob_zero{};
  for (int diff = -4; diff <= 4; ++diff) {
    const double logit_one = 2.0 * alpha + beta * diff;
    prob_zero[static_cast<std::size_t>(diff + 4)] = 1.0 / (1.0 + std::exp(logit_one));
  }
  const std::size_t h = height_;
  const std::size_t n = site_count();
  for (std::size_t site = 0; site < n; ++site) {
    const std::size_t row = site % h;
    int diff = 0;
    if (row > 0) diff += 2 * x[site - 1] - 1;
    if (row + 1 < h) diff += 2 * x[site + 1] - 1;
    if (site >= h) diff += 2 * x[site - h] - 1;
    if (site + h < n) diff += 2 * x[site + h] - 1;
    x[site] = static_cast<SiteState>(uniform01(rng) >= prob_zero[static_cast<std::size_t>(diff + 4)]);
  }
}

bool PottsModel::stats_within_bounds(const SuffStats& s) const {
  if (static_cast<std::size_t>(s.size()) != dimension()) return false;
  const double n = static_cast<double>(site_count());
  for (int k = 0; k + 1 < states_; ++k) {
    if (s[k] < -n || s[k] > n) return false;
  }
  const double agree = s[states_ - 1];
  return agree >= 0.0 && agree <= static_cast<double>(edge_count());
}

LatticeConfig LatticeConfig::from_rows(const std::vector<std::vector<int>>& rows, int states) {
  if (rows.empty() || rows.front().empty()) throw InvalidConfiguration("lattice has no sites");
  LatticeConfig out;
  out.height = rows.size();
  out.width = rows.front().size();
  out.states = states;
  out.sites.resize(out.height * out.width);
  for (std::size_t r = 0; r < out.height; ++r) {
    if (rows[r].size() != out.width) {
      throw InvalidConfiguration("lattice row " + std::to_string(r + 1) + " has " +
                                 std::to_string(rows[r].size()) + " entries, expected " +
                                 std::to_string(out.width));
    }
    for (std::size_t c = 0; c < out.width; ++c) {
      const int v = rows[r][c];
      if (v < 0 || v >= states) {
        throw InvalidConfiguration("lattice entry " + std::to_string(v) + " outside [0, " +
                                   std::to_string(states - 1) + "]");
      }
      out.sites[c * out.height + r] = static_cast<SiteState>(v);
    }
  }
  return out;
}

std::vector<std::vector<int>> LatticeConfig::to_rows() const {
  std::vector<std::vector<int>> rows(height, std::vector<int>(width));
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) rows[r][c] = sites[c * height + r];
  return rows;
}

LatticeConfig read_lattice(const std::filesystem::path& path, int states) {
  std::ifstream in(path);
  if (!in) throw InvalidConfiguration("cannot open lattice file " + path.string());
  std::vector<std::vector<int>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<int> row;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        row.push_back(std::stoi(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw InvalidConfiguration("lattice file " + path.string() + ": bad entry '" + token + "'");
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return LatticeConfig::from_rows(rows, states);
}

void write_lattice(const std::filesystem::path& path, const LatticeConfig& lattice) {
  std::ofstream out(path);
  if (!out) throw InvalidConfiguration("cannot write lattice file " + path.string());
  for (const auto& row : lattice.to_rows()) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << row[c];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// ERGM

ErgmModel::ErgmModel(std::size_t nodes) : nodes_(nodes) {
  if (nodes == 0) throw InvalidConfiguration("ERGM needs at least one node");
  dyads_.reserve(nodes * (nodes - 1) / 2);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = i + 1; j < nodes; ++j) dyads_.emplace_back(i, j);
}

std::string ErgmModel::name() const { return "ergm(n=" + std::to_string(nodes_) + ")"; }

std::size_t ErgmModel::dyad_index(std::size_t i, std::size_t j) const {
  if (i == j || i >= nodes_ || j >= nodes_) throw std::out_of_range("dyad_index");
  if (i > j) std::swap(i, j);
  // Row i starts after the dyads of rows 0..i-1.
  return i * nodes_ - i * (i + 1) / 2 + (j - i - 1);
}

SuffStats ErgmModel::suff_stats_unchecked(std::span<const SiteState> x) const {
  std::vector<std::size_t> degree(nodes_, 0);
  std::size_t edges = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k]) {
      ++edges;
      ++degree[dyads_[k].first];
      ++degree[dyads_[k].second];
    }
  }
  std::size_t two_stars = 0;
  for (std::size_t d : degree) two_stars += d > 1 ? d * (d - 1) / 2 : 0;
  SuffStats s(2);
  s << static_cast<double>(edges), static_cast<double>(two_stars);
  return s;
}

void ErgmModel::site_conditional(const ParamVector& theta, std::span<const SiteState> x,
                                 std::size_t site, std::span<double> probs) const {
  require_dimension(theta, 2, "site_conditional");
  const auto [i, j] = dyads_[site];
  // Degrees of i and j excluding the dyad itself.
  std::size_t di = 0, dj = 0;
  for (std::size_t k = 0; k < nodes_; ++k) {
    if (k != i && k != j) {
      di += x[dyad_index(i, k)];
      dj += x[dyad_index(j, k)];
    }
  }
  // Turning the dyad on adds one edge and di + dj two-stars.
  const double change = theta[0] + theta[1] * static_cast<double>(di + dj);
  probs[1] = 1.0 / (1.0 + std::exp(-change));
  probs[0] = 1.0 - probs[1];
}

void ErgmModel::gibbs_sweep(const ParamVector& theta, std::span<SiteState> x, Rng& rng) const {
  std::vector<std::size_t> degree(nodes_, 0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k]) {
      ++degree[dyads_[k].first];
      ++degree[dyads_[k].second];
    }
  }
  const double t_edge = theta[0];
  const double t_star = theta[1];
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto [i, j] = dyads_[k];
    const std::size_t on = x[k];
    const double change = t_edge + t_star * static_cast<double>(degree[i] + degree[j] - 2 * on);
    const double prob_zero = 1.0 - 1.0 / (1.0 + std::exp(-change));
    const SiteState next = static_cast<SiteState>(uniform01(rng) >= prob_zero);
    if (next != on) {
      const std::size_t delta_on = next;
      degree[i] = degree[i] + delta_on - on;
      degree[j] = degree[j] + delta_on - on;
      x[k] = next;
    }
  }
}

bool ErgmModel::stats_within_bounds(const SuffStats& s) const {
  if (s.size() != 2) return false;
  const double n = static_cast<double>(nodes_);
  const double max_edges = n * (n - 1) / 2;
  const double max_stars = nodes_ < 3 ? 0.0 : n * (n - 1) * (n - 2) / 2;
  return s[0] >= 0 && s[0] <= max_edges && s[1] >= 0 && s[1] <= max_stars;
}

GraphConfig GraphConfig::empty(std::size_t nodes) {
  GraphConfig g;
  g.nodes = nodes;
  g.adjacency.assign(nodes * nodes, 0);
  return g;
}

GraphConfig GraphConfig::complete(std::size_t nodes) {
  GraphConfig g = empty(nodes);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = 0; j < nodes; ++j) g.adjacency[i * nodes + j] = (i != j);
  return g;
}

GraphConfig GraphConfig::from_dyads(const ErgmModel& model, std::span<const SiteState> x) {
  model.validate(x);
  GraphConfig g = empty(model.nodes());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto [i, j] = model.dyad(k);
    g.set_edge(i, j, x[k] != 0);
  }
  return g;
}

void GraphConfig::set_edge(std::size_t i, std::size_t j, bool on) {
  adjacency[i * nodes + j] = on;
  adjacency[j * nodes + i] = on;
}

void GraphConfig::validate() const {
  if (adjacency.size() != nodes * nodes) throw InvalidConfiguration("adjacency size mismatch");
  for (std::size_t i = 0; i < nodes; ++i) {
    if (adjacency[i * nodes + i]) {
      throw InvalidConfiguration("self-loop at node " + std::to_string(i + 1));
    }
    for (std::size_t j = 0; j < nodes; ++j) {
      if (adjacency[i * nodes + j] > 1 || adjacency[i * nodes + j] != adjacency[j * nodes + i]) {
        throw InvalidConfiguration("adjacency is not a symmetric 0/1 matrix at (" +
                                   std::to_string(i + 1) + ", " + std::to_string(j + 1) + ")");
      }
    }
  }
}

Configuration GraphConfig::to_dyads(const ErgmModel& model) const {
  validate();
  if (model.nodes() != nodes) {
    throw InvalidConfiguration("graph has " + std::to_string(nodes) + " nodes, model expects " +
                               std::to_string(model.nodes()));
  }
  Configuration x(model.site_count());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto [i, j] = model.dyad(k);
    x[k] = edge(i, j);
  }
  return x;
}

GraphConfig read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfiguration("cannot open edge list " + path.string());
  std::optional<GraphConfig> graph;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw InvalidConfiguration(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) continue;
    if (first == "n") {
      long long count = 0;
      if (graph || !(fields >> count) || count <= 0) fail("bad or repeated node-count header");
      graph = GraphConfig::empty(static_cast<std::size_t>(count));
      continue;
    }
    if (!graph) fail("edge before the `n <count>` header");
    long long i = 0, j = 0;
    try {
      i = std::stoll(first);
    } catch (const std::exception&) {
      fail("bad node id '" + first + "'");
    }
    std::string extra;
    if (!(fields >> j) || (fields >> extra)) fail("expected exactly two node ids");
    const auto n = static_cast<long long>(graph->nodes);
    if (i < 1 || j < 1 || i > n || j > n) fail("node id out of range");
    if (i == j) fail("self-loop");
    graph->set_edge(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1), true);
  }
  if (!graph) throw InvalidConfiguration(path.string() + ": missing `n <count>` header");
  return *graph;
}

void write_edge_list(const std::filesystem::path& path, const GraphConfig& graph) {
  std::ofstream out(path);
  if (!out) throw InvalidConfiguration("cannot write edge list " + path.string());
  out << "n " << graph.nodes << '\n';
  for (std::size_t i = 0; i < graph.nodes; ++i)
    for (std::size_t j = i + 1; j < graph.nodes; ++j)
      if (graph.edge(i, j)) out << i + 1 << ' ' << j + 1 << '\n';
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Configuration> run_forward_chains(const GibbsModel& model, const ParamVector& theta,
                                              const Configuration* start, std::size_t count,
                                              std::size_t sweeps, Rng& rng) {
  require_dimension(theta, model.dimension(), "forward_sample");
  if (count == 0 || sweeps == 0) throw std::invalid_argument("forward_sample: N and sweeps must be >= 1");
  const std::uint64_t call_seed = rng();
  std::vector<Configuration> draws(count);
  parallel_for(count, [&](std::size_t k) {
    Rng local(derive_seed({call_seed, k}));
    Configuration x = start ? *start : model.random_configuration(local);
    for (std::size_t s = 0; s < sweeps; ++s) model.gibbs_sweep(theta, x, local);
    draws[k] = std::move(x);
  });
  return draws;
}

}  // namespace

std::vector<Configuration> forward_sample(const GibbsModel& model, const ParamVector& theta,
                                          std::size_t count, std::size_t sweeps, Rng& rng) {
  return run_forward_chains(model, theta, nullptr, count, sweeps, rng);
}

std::vector<Configuration> forward_sample_from(const GibbsModel& model, const ParamVector& theta,
                                               std::span<const SiteState> start, std::size_t count,
                                               std::size_t sweeps, Rng& rng) {
  model.suff_stats(start);  // validates
  const Configuration initial(start.begin(), start.end());
  return run_forward_chains(model, theta, &initial, count, sweeps, rng);
}

}  // namespace nhmc
