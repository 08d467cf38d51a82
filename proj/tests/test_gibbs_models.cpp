#include "doctest.h"
#include "test_support.hpp"

#include "nhmc/exact_oracle.hpp"
#include "nhmc/gibbs_models.hpp"
#include "nhmc/parallel.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nhmc;
using nhmc::testing::vec;

namespace {

const std::filesystem::path kData = NHMC_DATA_DIR;

Configuration lattice_all(std::size_t h, std::size_t w, SiteState v) { return Configuration(h * w, v); }

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("nhmc_test_" + name);
}

// Full single-site transition kernel of a sweep, applied to a distribution.
std::vector<double> apply_sweep(const GibbsModel& model, const ParamVector& theta,
                                const std::vector<double>& dist) {
  const std::size_t k = static_cast<std::size_t>(model.num_states());
  const std::size_t sites = model.site_count();
  std::vector<double> current = dist;
  std::vector<double> probs(k);
  for (std::size_t site = 0; site < sites; ++site) {
    std::vector<double> next(current.size(), 0.0);
    for (std::size_t code = 0; code < current.size(); ++code) {
      Configuration x = testing::decode(code, sites, k);
      model.site_conditional(theta, x, site, probs);
      for (std::size_t s = 0; s < k; ++s) {
        x[site] = static_cast<SiteState>(s);
        next[testing::encode(x, k)] += current[code] * probs[s];
      }
    }
    current.swap(next);
  }
  return current;
}

void check_gibbs_invariance(const GibbsModel& model, const ParamVector& theta) {
  const std::size_t k = static_cast<std::size_t>(model.num_states());
  const std::size_t sites = model.site_count();
  std::size_t total = 1;
  for (std::size_t i = 0; i < sites; ++i) total *= k;
  std::vector<double> exact(total);
  double z = 0.0;
  for (std::size_t code = 0; code < total; ++code) {
    exact[code] = std::exp(model.potential(theta, testing::decode(code, sites, k)));
    z += exact[code];
  }
  for (auto& p : exact) p /= z;
  const auto after = apply_sweep(model, theta, exact);
  double worst = 0.0;
  for (std::size_t i = 0; i < total; ++i) worst = std::max(worst, std::abs(after[i] - exact[i]));
  CHECK(worst < 1e-12);
}

}  // namespace

TEST_CASE("sufficient statistics of reference configurations") {
  SUBCASE("karate club network") {
    const GraphConfig g = read_edge_list(kData / "karate.edgelist");
    const ErgmModel model(g.nodes);
    CHECK(g.nodes == 34);
    const SuffStats s = model.suff_stats(g.to_dyads(model));
    CHECK(s[0] == 78);
    CHECK(s[1] == 528);
    CHECK(model.potential(vec({1, -1}), g.to_dyads(model)) == -450.0);
  }
  SUBCASE("empty graph") {
    const ErgmModel model(7);
    const SuffStats s = model.suff_stats(GraphConfig::empty(7).to_dyads(model));
    CHECK(s[0] == 0);
    CHECK(s[1] == 0);
  }
  SUBCASE("complete graph on four nodes") {
    const ErgmModel model(4);
    const SuffStats s = model.suff_stats(GraphConfig::complete(4).to_dyads(model));
    CHECK(s[0] == 6);
    CHECK(s[1] == 12);
  }
  SUBCASE("2x2 lattice of ones") {
    const PottsModel model(2, 2);
    const auto x = lattice_all(2, 2, 1);
    const SuffStats s = model.suff_stats(x);
    CHECK(s[0] == 4);
    CHECK(s[1] == 4);
    CHECK(model.potential(vec({0, 0}), x) == 0.0);
    CHECK(model.potential(vec({0, 0.5}), x) == 2.0);
  }
  SUBCASE("single-site lattice and single-node graph") {
    const PottsModel lattice(1, 1);
    CHECK(lattice.suff_stats(Configuration{0})[1] == 0);
    CHECK(lattice.suff_stats(Configuration{1})[0] == 1);
    const ErgmModel graph(1);
    CHECK(graph.site_count() == 0);
    const SuffStats s = graph.suff_stats(Configuration{});
    CHECK(s[0] == 0);
    CHECK(s[1] == 0);
  }
}

TEST_CASE("Potts statistics match a direct neighbour count") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 1 + rng() % 7, w = 1 + rng() % 9;
    const int k = 2 + static_cast<int>(rng() % 3);
    const PottsModel model(h, w, k);
    const Configuration x = model.random_configuration(rng);
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    double agree = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t r = 0; r < h; ++r) {
        const auto v = x[model.site_index(r, c)];
        counts[v] += 1.0;
        if (r + 1 < h && x[model.site_index(r + 1, c)] == v) agree += 1.0;
        if (c + 1 < w && x[model.site_index(r, c + 1)] == v) agree += 1.0;
      }
    }
    const SuffStats s = model.suff_stats(x);
    for (int j = 1; j < k; ++j) CHECK(s[j - 1] == counts[static_cast<std::size_t>(j)] - counts[0]);
    CHECK(s[k - 1] == agree);
    CHECK(model.stats_within_bounds(s));
  }
}

TEST_CASE("general-K potential uses sum-to-zero node weights") {
  const PottsModel model(2, 3, 3);
  const Configuration x{0, 1, 2, 2, 1, 1};
  const ParamVector theta = vec({0.4, -0.3, 0.25});
  const double a1 = 0.4, a2 = -0.3, a0 = -(a1 + a2);
  const double node = a0 + a1 + a2 + a2 + a1 + a1;
  // Columns (0,1), (2,2), (1,1): only the two vertical pairs in columns 1 and 2 agree.
  const double agree = 2.0;
  CHECK(model.potential(theta, x) == doctest::Approx(node + 0.25 * agree).epsilon(1e-14));
}

TEST_CASE("invalid configurations are rejected") {
  const PottsModel lattice(2, 2);
  CHECK_THROWS_AS(lattice.suff_stats(Configuration{0, 1, 2, 0}), InvalidConfiguration);
  CHECK_THROWS_AS(lattice.suff_stats(Configuration{0, 1, 1}), InvalidConfiguration);
  CHECK_THROWS_AS(lattice.potential(vec({0, 0, 0}), Configuration{0, 1, 1, 0}), DimensionMismatch);
  GraphConfig g = GraphConfig::empty(3);
  g.adjacency[1] = 1;  // (0,1) without (1,0)
  CHECK_THROWS_AS(g.validate(), InvalidConfiguration);
  g = GraphConfig::empty(3);
  g.adjacency[4] = 1;  // self-loop on node 1
  CHECK_THROWS_AS(g.validate(), InvalidConfiguration);
}

TEST_CASE("potential is linear in theta and its gradient is the statistic") {
  Rng rng(5);
  const PottsModel lattice(3, 4);
  const ErgmModel graph(6);
  for (const GibbsModel* model : {static_cast<const GibbsModel*>(&lattice), static_cast<const GibbsModel*>(&graph)}) {
    for (int trial = 0; trial < 25; ++trial) {
      const auto x = model->random_configuration(rng);
      const auto a = testing::random_theta(rng, 2, -2, 2);
      const auto b = testing::random_theta(rng, 2, -2, 2);
      CHECK(model->potential(a + b, x) ==
            doctest::Approx(model->potential(a, x) + model->potential(b, x)).epsilon(1e-12));
      const SuffStats s = model->suff_stats(x);
      for (Eigen::Index i = 0; i < 2; ++i) {
        ParamVector hi = a, lo = a;
        hi[i] += 1e-6;
        lo[i] -= 1e-6;
        const double fd = (model->potential(hi, x) - model->potential(lo, x)) / 2e-6;
        CHECK(std::abs(fd - s[i]) < 1e-6);
      }
    }
  }
}

TEST_CASE("site conditionals") {
  std::vector<double> probs(3);
  SUBCASE("zero parameters give a uniform conditional") {
    const PottsModel model(3, 3, 3);
    Rng rng(1);
    const auto x = model.random_configuration(rng);
    model.site_conditional(vec({0, 0, 0}), x, 4, probs);
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("independent dyads at zero parameters") {
    const ErgmModel model(5);
    Rng rng(2);
    const auto x = model.random_configuration(rng);
    std::vector<double> p2(2);
    for (std::size_t dyad = 0; dyad < model.site_count(); ++dyad) {
      model.site_conditional(vec({0, 0}), x, dyad, p2);
      CHECK(p2[1] == doctest::Approx(0.5).epsilon(1e-15));
    }
  }
  SUBCASE("interior site surrounded by ones") {
    const PottsModel model(3, 3);
    const auto x = lattice_all(3, 3, 1);
    std::vector<double> p2(2);
    const double beta = 0.37;
    model.site_conditional(vec({0, beta}), x, model.site_index(1, 1), p2);
    CHECK(p2[1] == doctest::Approx(std::exp(4 * beta) / (std::exp(4 * beta) + 1)).epsilon(1e-14));
  }
  SUBCASE("ERGM change statistic") {
    const ErgmModel model(4);
    GraphConfig g = GraphConfig::empty(4);
    g.set_edge(0, 2, true);
    g.set_edge(1, 2, true);
    g.set_edge(1, 3, true);
    const auto x = g.to_dyads(model);
    std::vector<double> p2(2);
    const ParamVector theta = vec({-0.2, 0.3});
    // Toggling (0,1) on adds one edge and deg(0)+deg(1) = 1 + 2 two-stars.
    model.site_conditional(theta, x, model.dyad_index(0, 1), p2);
    const double change = -0.2 + 0.3 * 3;
    CHECK(p2[1] == doctest::Approx(1.0 / (1.0 + std::exp(-change))).epsilon(1e-14));
  }
}

TEST_CASE("one sweep leaves the exact distribution invariant") {
  Rng rng(8);
  for (int trial = 0; trial < 3; ++trial) {
    check_gibbs_invariance(PottsModel(2, 2), testing::random_theta(rng, 2, -1, 1));
    check_gibbs_invariance(ErgmModel(4), testing::random_theta(rng, 2, -1, 1));
  }
  check_gibbs_invariance(PottsModel(2, 2, 3), vec({0.3, -0.2, 0.5}));
}

TEST_CASE("specialized sweeps follow the generic site-by-site update") {
  Rng seeds(99);
  const PottsModel lattice(5, 4);
  const ErgmModel graph(7);
  for (const GibbsModel* model : {static_cast<const GibbsModel*>(&lattice), static_cast<const GibbsModel*>(&graph)}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto theta = testing::random_theta(seeds, 2, -0.8, 0.8);
      const std::uint64_t seed = seeds();
      Rng a(seed), b(seed);
      Configuration x = model->random_configuration(a);
      Configuration y = model->random_configuration(b);
      for (int sweep = 0; sweep < 5; ++sweep) {
        model->gibbs_sweep(theta, x, a);
        for (std::size_t site = 0; site < model->site_count(); ++site) model->gibbs_site_update(theta, y, site, b);
      }
      CHECK(x == y);
    }
  }
}

TEST_CASE("forward samples") {
  SUBCASE("independent dyads have mean edge count n(n-1)/4") {
    const ErgmModel model(6);
    Rng rng(3);
    const auto draws = forward_sample(model, vec({0, 0}), 4000, 2, rng);
    double sum = 0.0;
    for (const auto& x : draws) sum += model.suff_stats(x)[0];
    const double mean = sum / 4000.0;
    const double se = std::sqrt(15 * 0.25 / 4000.0);
    CHECK(std::abs(mean - 7.5) < 3 * se);
  }
  SUBCASE("4x4 agreement count at zero parameters") {
    const PottsModel model(4, 4);
    Rng rng(4);
    const auto draws = forward_sample(model, vec({0, 0}), 10000, 1, rng);
    double sum = 0.0, sq = 0.0;
    for (const auto& x : draws) {
      const double b = model.suff_stats(x)[1];
      sum += b;
      sq += b * b;
    }
    const double mean = sum / 1e4;
    const double se = std::sqrt((sq / 1e4 - mean * mean) / 1e4);
    CHECK(std::abs(mean - 12.0) < 3 * se);
  }
  SUBCASE("8x8 agreement count matches the exact expectation") {
    const PottsModel model(8, 8);
    const ParamVector theta = vec({0, 0.4});
    Rng rng(6);
    const auto draws = forward_sample(model, theta, 10000, 200, rng);
    double sum = 0.0, sq = 0.0;
    for (const auto& x : draws) {
      const SuffStats s = model.suff_stats(x);
      CHECK(model.stats_within_bounds(s));
      sum += s[1];
      sq += s[1] * s[1];
    }
    const double mean = sum / 1e4;
    const double se = std::sqrt((sq / 1e4 - mean * mean) / 1e4);
    const double exact = exact_grad_log_z(exact_log_partition(model), theta)[1];
    CHECK(std::abs(mean - exact) < 3 * se);
  }
  SUBCASE("results do not depend on the worker count") {
    const PottsModel model(6, 5);
    Rng a(77), b(77);
    set_worker_count(1);
    const auto serial = forward_sample(model, vec({0.1, 0.6}), 37, 20, a);
    set_worker_count(3);
    const auto threaded = forward_sample(model, vec({0.1, 0.6}), 37, 20, b);
    set_worker_count(1);
    CHECK(serial == threaded);
    CHECK(a() == b());
  }
  SUBCASE("sampled ERGM statistics stay within bounds") {
    const ErgmModel model(9);
    Rng rng(12);
    for (const auto& x : forward_sample(model, vec({0.5, 0.2}), 200, 10, rng)) {
      CHECK(model.stats_within_bounds(model.suff_stats(x)));
    }
  }
}

TEST_CASE("lattice and edge-list files") {
  SUBCASE("lattice round trip keeps row layout") {
    const auto lattice = LatticeConfig::from_rows({{0, 1, 1}, {1, 0, 0}}, 2);
    CHECK(lattice.height == 2);
    CHECK(lattice.width == 3);
    CHECK(lattice.sites == Configuration{0, 1, 1, 0, 1, 0});
    const auto path = temp_file("lattice.txt");
    write_lattice(path, lattice);
    const auto back = read_lattice(path, 2);
    CHECK(back.sites == lattice.sites);
    CHECK(back.to_rows() == lattice.to_rows());
  }
  SUBCASE("ragged or out-of-range lattices are rejected") {
    const auto path = temp_file("bad_lattice.txt");
    std::ofstream(path) << "0 1\n1\n";
    CHECK_THROWS(read_lattice(path, 2));
    std::ofstream(path) << "# comment\n0 3\n1 0\n";
    CHECK_THROWS(read_lattice(path, 2));
  }
  SUBCASE("edge list round trip") {
    GraphConfig g = GraphConfig::empty(5);
    g.set_edge(0, 4, true);
    g.set_edge(2, 3, true);
    const auto path = temp_file("graph.txt");
    write_edge_list(path, g);
    const auto back = read_edge_list(path);
    CHECK(back.nodes == 5);
    CHECK(back.adjacency == g.adjacency);
  }
  SUBCASE("malformed edge lists are rejected") {
    const auto path = temp_file("bad_graph.txt");
    std::ofstream(path) << "1 2\n";
    CHECK_THROWS(read_edge_list(path));
    std::ofstream(path) << "n 3\n2 2\n";
    CHECK_THROWS(read_edge_list(path));
    std::ofstream(path) << "n 3\n1 4\n";
    CHECK_THROWS(read_edge_list(path));
  }
}

TEST_CASE("forward samples started from a given configuration") {
  const PottsModel model(4, 4);
  const Configuration ones(16, 1);
  Rng rng(5);
  // At strong coupling one sweep cannot leave the all-ones start.
  for (const auto& x : forward_sample_from(model, vec({0.0, 20.0}), ones, 8, 1, rng)) CHECK(x == ones);
  Rng a(9), b(9);
  CHECK(forward_sample_from(model, vec({0.1, 0.3}), ones, 5, 3, a) ==
        forward_sample_from(model, vec({0.1, 0.3}), ones, 5, 3, b));
  const Configuration wrong(15, 1);
  CHECK_THROWS(forward_sample_from(model, vec({0.0, 0.0}), wrong, 1, 1, rng));
}
