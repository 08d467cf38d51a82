#include "doctest.h"
#include "test_support.hpp"

#include "nhmc/estimators.hpp"
#include "nhmc/exact_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace nhmc;
using nhmc::testing::vec;

namespace {

std::shared_ptr<const PottsModel> potts(std::size_t h, std::size_t w) {
  return std::make_shared<const PottsModel>(h, w);
}

Posterior potts_posterior(std::size_t h, std::size_t w, std::uint64_t seed, std::size_t sweeps,
                          Prior prior = Prior::flat(2)) {
  auto model = potts(h, w);
  Rng rng(seed);
  auto observed = forward_sample(*model, vec({0.0, 0.5}), 1, 200, rng).front();
  return Posterior::make(model, std::move(observed), std::move(prior), sweeps);
}

AuxiliaryBatch batch_of(const GibbsModel& model, const ParamVector& anchor, std::vector<Configuration> draws) {
  return AuxiliaryBatch::from_draws(model, anchor, std::move(draws));
}

}  // namespace

TEST_CASE("batches cache the statistics of their draws") {
  const PottsModel model(3, 3);
  Rng rng(1);
  const auto batch = draw_batch(Posterior::make(potts(3, 3), Configuration(9, 0), Prior::flat(2), 5),
                                vec({0.1, 0.2}), 7, rng);
  CHECK(batch.size() == 7);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    CHECK(batch.stats.col(static_cast<Eigen::Index>(k)) == model.suff_stats(batch.draws[k]));
  }
  CHECK_THROWS(AuxiliaryBatch::from_draws(model, vec({0, 0}), {}));
}

TEST_CASE("gradient estimate") {
  const Posterior post = potts_posterior(4, 4, 3, 20);
  SUBCASE("draws equal to the data cancel") {
    const auto batch = batch_of(*post.model, vec({0.1, 0.3}), {post.observed, post.observed, post.observed});
    CHECK(grad_log_post_estimate(post, vec({0.1, 0.3}), batch).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("a single draw") {
    Rng rng(2);
    const auto batch = draw_batch(post, vec({0.0, 0.4}), 1, rng);
    const Vector g = grad_log_post_estimate(post, vec({0.0, 0.4}), batch);
    CHECK(g == post.observed_stats - post.model->suff_stats(batch.draws[0]));
  }
  SUBCASE("batch must be drawn at the requested point") {
    Rng rng(2);
    const auto batch = draw_batch(post, vec({0.0, 0.4}), 2, rng);
    CHECK_THROWS(grad_log_post_estimate(post, vec({0.0, 0.41}), batch));
  }
  SUBCASE("support policy for bounded priors") {
    const Posterior boxed = potts_posterior(4, 4, 3, 20, Prior::box(vec({-0.5, 0}), vec({0.5, 1})));
    const auto batch = batch_of(*boxed.model, vec({0.9, 0.3}), {boxed.observed});
    CHECK_THROWS_AS(grad_log_post_estimate(boxed, vec({0.9, 0.3}), batch), OutsideSupport);
    const Vector g = grad_log_post_estimate(boxed, vec({0.9, 0.3}), batch, SupportPolicy::zero_prior_gradient);
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("Gaussian prior contributes its gradient") {
    const Posterior gp = potts_posterior(4, 4, 3, 20, Prior::gaussian(vec({0, 0}), Matrix::Identity(2, 2) * 4.0));
    const auto batch = batch_of(*gp.model, vec({0.2, -0.4}), {gp.observed});
    const Vector g = grad_log_post_estimate(gp, vec({0.2, -0.4}), batch);
    CHECK(g[0] == doctest::Approx(-0.05));
    CHECK(g[1] == doctest::Approx(0.1));
  }
}

TEST_CASE("gradient estimate on 8x8 is within Monte Carlo error of the exact gradient") {
  const Posterior post = potts_posterior(8, 8, 42, 200);
  const ParamVector theta = vec({0.0, 0.4});
  Rng rng(43);
  const auto batch = draw_batch(post, theta, 10000, rng);
  const Vector estimate = grad_log_post_estimate(post, theta, batch);
  const Vector exact = post.observed_stats - exact_grad_log_z(exact_log_partition(*post.model), theta);
  const Matrix cov = sample_covariance(batch.stats);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const double se = std::sqrt(cov(i, i) / 1e4);
    CHECK(std::abs(estimate[i] - exact[i]) < 3 * se);
  }
}

TEST_CASE("gradient error shrinks at the Monte Carlo rate") {
  const Posterior post = potts_posterior(8, 8, 42, 100);
  const ParamVector theta = vec({0.0, 0.4});
  const Vector exact = post.observed_stats - exact_grad_log_z(exact_log_partition(*post.model), theta);
  Rng rng(5);
  std::vector<double> log_n, log_err;
  for (std::size_t n : {10u, 100u, 1000u, 10000u}) {
    double sq = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      sq += (grad_log_post_estimate(post, theta, draw_batch(post, theta, n, rng)) - exact).squaredNorm();
    }
    log_n.push_back(std::log(static_cast<double>(n)));
    log_err.push_back(0.5 * std::log(sq / 20.0));
  }
  const double mx = std::accumulate(log_n.begin(), log_n.end(), 0.0) / 4;
  const double my = std::accumulate(log_err.begin(), log_err.end(), 0.0) / 4;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxy += (log_n[i] - mx) * (log_err[i] - my);
    sxx += (log_n[i] - mx) * (log_n[i] - mx);
  }
  const double slope = sxy / sxx;
  CHECK(slope > -0.7);
  CHECK(slope < -0.3);
}

TEST_CASE("importance sampling ratio") {
  const Posterior post = potts_posterior(3, 3, 9, 50);
  Rng rng(10);
  SUBCASE("identical points give exactly zero") {
    const auto batch = draw_batch(post, vec({0.2, 0.3}), 25, rng);
    CHECK(ise_log_ratio(vec({0.2, 0.3}), vec({0.2, 0.3}), batch).log_value == 0.0);
  }
  SUBCASE("single draw") {
    const auto batch = draw_batch(post, vec({0.0, 0.5}), 1, rng);
    const ParamVector theta = vec({0.1, 0.2});
    const auto r = ise_log_ratio(theta, vec({0.0, 0.5}), batch);
    CHECK(r.log_value == (theta - vec({0.0, 0.5})).dot(post.model->suff_stats(batch.draws[0])));
    CHECK(r.n_draws == 1);
    CHECK(r.n_segments == 1);
  }
  SUBCASE("wrong anchor is rejected") {
    const auto batch = draw_batch(post, vec({0.0, 0.5}), 3, rng);
    CHECK_THROWS(ise_log_ratio(vec({0, 0}), vec({0.0, 0.4}), batch));
  }
  SUBCASE("draw order does not matter") {
    auto batch = draw_batch(post, vec({0.0, 0.5}), 40, rng);
    const double before = ise_log_ratio(vec({0.3, 0.1}), vec({0.0, 0.5}), batch).log_value;
    const Vector grad_before = grad_log_post_estimate(post, vec({0.0, 0.5}), batch);
    auto draws = batch.draws;
    std::reverse(draws.begin(), draws.end());
    std::rotate(draws.begin(), draws.begin() + 13, draws.end());
    const auto shuffled = batch_of(*post.model, vec({0.0, 0.5}), draws);
    CHECK(ise_log_ratio(vec({0.3, 0.1}), vec({0.0, 0.5}), shuffled).log_value == doctest::Approx(before).epsilon(1e-14));
    CHECK((grad_log_post_estimate(post, vec({0.0, 0.5}), shuffled) - grad_before).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("importance weights are exactly unbiased under exhaustive weighting") {
  const PottsModel model(3, 3);
  const auto log_z = exact_log_partition(model);
  Rng rng(12);
  for (int pair = 0; pair < 10; ++pair) {
    const auto theta = testing::random_theta(rng, 2, -1, 1);
    const auto theta_prime = testing::random_theta(rng, 2, -1, 1);
    const double lz_prime = log_z(theta_prime);
    double expectation = 0.0;
    for (std::size_t code = 0; code < 512; ++code) {
      const auto x = testing::decode(code, 9, 2);
      const double p = std::exp(model.potential(theta_prime, x) - lz_prime);
      const auto batch = batch_of(model, theta_prime, {x});
      expectation += p * std::exp(ise_log_ratio(theta, theta_prime, batch).log_value);
    }
    const double exact = std::exp(exact_log_ratio(log_z, theta, theta_prime));
    CHECK(std::abs(expectation - exact) < 1e-9 * std::max(1.0, exact));
  }
}

TEST_CASE("ratio estimate is unbiased by simulation") {
  const Posterior post = potts_posterior(3, 3, 9, 30);
  const ParamVector theta = vec({0.0, 0.2}), theta_prime = vec({0.0, 0.5});
  const double exact = std::exp(exact_log_ratio(exact_log_partition(*post.model), theta, theta_prime));
  Rng rng(13);
  std::vector<double> values;
  for (int rep = 0; rep < 50; ++rep) {
    values.push_back(std::exp(ise_log_ratio(theta, theta_prime, draw_batch(post, theta_prime, 10000, rng)).log_value));
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / 50.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double se = std::sqrt(ss / 49.0 / 50.0);
  CHECK(std::abs(mean - exact) < 3 * se);
}

TEST_CASE("leapfrog ratio estimator") {
  const Posterior post = potts_posterior(3, 3, 9, 20);
  Rng rng(14);
  SUBCASE("one segment is the importance sampling estimate, bit for bit") {
    const std::vector<ParamVector> path{vec({0.1, 0.2}), vec({-0.2, 0.6})};
    const std::vector<AuxiliaryBatch> batches{draw_batch(post, path[1], 10, rng)};
    const auto lfe = lfe_log_ratio(path, batches);
    const auto ise = ise_log_ratio(path[0], path[1], batches[0]);
    CHECK(lfe.log_value == ise.log_value);
    CHECK(lfe.n_segments == 1);
  }
  SUBCASE("constant path") {
    const std::vector<ParamVector> path(4, vec({0.1, 0.4}));
    std::vector<AuxiliaryBatch> batches;
    for (int l = 0; l < 3; ++l) batches.push_back(draw_batch(post, path[0], 5, rng));
    CHECK(lfe_log_ratio(path, batches).log_value == 0.0);
  }
  SUBCASE("segment sum") {
    const std::vector<ParamVector> path{vec({0, 0.1}), vec({0.1, 0.2}), vec({0.15, 0.4})};
    const std::vector<AuxiliaryBatch> batches{draw_batch(post, path[1], 3, rng), draw_batch(post, path[2], 3, rng)};
    const double expect = ise_log_ratio(path[0], path[1], batches[0]).log_value +
                          ise_log_ratio(path[1], path[2], batches[1]).log_value;
    CHECK(lfe_log_ratio(path, batches).log_value == expect);
  }
  SUBCASE("shape errors") {
    const std::vector<ParamVector> path{vec({0, 0.1}), vec({0.1, 0.2})};
    const std::vector<AuxiliaryBatch> none;
    CHECK_THROWS(lfe_log_ratio(path, none));
    const std::vector<AuxiliaryBatch> wrong{draw_batch(post, path[0], 2, rng)};
    CHECK_THROWS(lfe_log_ratio(path, wrong));
  }
}

TEST_CASE("precision estimate") {
  SUBCASE("identical draws fall back to the jitter floor") {
    const Posterior post = potts_posterior(3, 3, 1, 5);
    const auto batch = batch_of(*post.model, vec({0, 0}), std::vector<Configuration>(5, post.observed));
    const Matrix m = hessian_precision_estimate(post, vec({0, 0}), batch);
    CHECK((m - 1e-8 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-20);
  }
  SUBCASE("all graphs on three nodes") {
    auto model = std::make_shared<const ErgmModel>(3);
    const Posterior post = Posterior::make(model, Configuration(3, 0), Prior::flat(2), 1);
    std::vector<Configuration> graphs;
    for (std::size_t code = 0; code < 8; ++code) graphs.push_back(testing::decode(code, 3, 2));
    const Matrix m = hessian_precision_estimate(post, vec({0, 0}), batch_of(*model, vec({0, 0}), graphs));
    // Unbiased covariance of the uniform distribution over the 8 graphs.
    CHECK(m(0, 0) == doctest::Approx(0.75 * 8 / 7));
    CHECK(m(0, 1) == doctest::Approx(0.75 * 8 / 7));
    CHECK(m(1, 1) == doctest::Approx(0.9375 * 8 / 7));
  }
  SUBCASE("needs more draws than parameters") {
    const Posterior post = potts_posterior(3, 3, 1, 5);
    const auto batch = batch_of(*post.model, vec({0, 0}), {post.observed, post.observed});
    CHECK_THROWS(hessian_precision_estimate(post, vec({0, 0}), batch));
  }
  SUBCASE("Gaussian prior adds its precision") {
    const Posterior post = potts_posterior(3, 3, 1, 5, Prior::gaussian(vec({0, 0}), Matrix::Identity(2, 2) * 0.5));
    const auto batch = batch_of(*post.model, vec({0, 0}), std::vector<Configuration>(5, post.observed));
    const Matrix m = hessian_precision_estimate(post, vec({0, 0}), batch);
    CHECK((m - 2.0 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("precision estimate on 8x8 matches the exact Hessian of log Z") {
  const Posterior post = potts_posterior(8, 8, 42, 200);
  const ParamVector mode = vec({0.0, 0.4});
  Rng rng(77);
  const auto batch = draw_batch(post, mode, 500, rng);
  const Matrix estimate = hessian_precision_estimate(post, mode, batch);
  const Matrix exact = exact_hessian_log_z(exact_log_partition(*post.model), mode);
  const Matrix centered = batch.stats.colwise() - batch.stats.rowwise().mean();
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      const Eigen::ArrayXd products = centered.row(i).array() * centered.row(j).array();
      const double var = (products - products.mean()).square().mean();
      CHECK(std::abs(estimate(i, j) - exact(i, j)) < 3 * std::sqrt(var / 500.0));
    }
  }
}

TEST_CASE("SPD repair") {
  Matrix m(2, 2);
  m << 1, 2, 2, 1;  // eigenvalues 3 and -1
  const Matrix fixed = repair_spd(m);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(fixed);
  CHECK(eig.eigenvalues().minCoeff() > 0);
  CHECK(eig.eigenvalues().minCoeff() < 1e-6);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(repair_spd(bad), SingularPrecision);
  CHECK(repair_spd(Matrix::Identity(3, 3)) == Matrix::Identity(3, 3));
}

TEST_CASE("Monte Carlo normalizer reuses each batch for both estimates") {
  const Posterior post = potts_posterior(3, 3, 9, 10);
  const MonteCarloNormalizer normalizer(post, 6);
  Rng rng(3);
  const auto point = normalizer.visit(vec({0.1, 0.3}), rng);
  REQUIRE(point.batch.has_value());
  CHECK(point.batch->size() == 6);
  CHECK(point.mean_stats == point.batch->mean_stats());
  CHECK(normalizer.log_ratio(vec({0.0, 0.2}), point) ==
        ise_log_ratio(vec({0.0, 0.2}), vec({0.1, 0.3}), *point.batch).log_value);
  CHECK(normalizer.draws_per_visit() == 6);
}
