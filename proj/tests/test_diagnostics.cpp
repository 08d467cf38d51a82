#include "doctest.h"
#include "test_support.hpp"

#include "nhmc/diagnostics.hpp"

#include <cmath>
#include <filesystem>

using namespace nhmc;
using nhmc::testing::vec;

namespace {

std::vector<double> ar1(double phi, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  double v = standard_normal(rng) / std::sqrt(1.0 - phi * phi);
  for (auto& xi : x) {
    v = phi * v + standard_normal(rng);
    xi = v;
  }
  return x;
}

ChainTrace make_trace(const std::vector<ParamVector>& states, const std::vector<int>& accepted) {
  ChainTrace t;
  t.states.push_back(states.front());
  for (std::size_t i = 1; i < states.size(); ++i) {
    Transition tr;
    tr.theta = states[i];
    tr.proposal = states[i];
    tr.accepted = accepted[i - 1] != 0;
    tr.log_accept = tr.accepted ? 0.0 : -1.0;
    t.append(tr, 0.001);
  }
  return t;
}

std::filesystem::path scratch_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / ("nhmc_diag_" + std::string(name));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("ESS of an independent series is close to its length") {
  const auto x = ar1(0.0, 100000, 1);
  const EssResult r = effective_sample_size(x);
  CHECK(r.ess / 1e5 >= 0.9);
  CHECK(r.ess / 1e5 <= 1.1);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("ESS of an AR(1) series matches the closed form") {
  const double phi = 0.9;
  const auto x = ar1(phi, 100000, 2);
  const EssResult r = effective_sample_size(x);
  const double expected = (1.0 - phi) / (1.0 + phi);
  CHECK(std::abs(r.ess / 1e5 / expected - 1.0) < 0.25);
}

TEST_CASE("ESS properties on random AR(1) series") {
  Rng rng(5);
  for (int rep = 0; rep < 40; ++rep) {
    const double phi = nhmc::testing::uniform(rng, -0.5, 0.95);
    const std::size_t n = 10 + rng() % 3000;
    auto x = ar1(phi, n, rng());
    const EssResult r = effective_sample_size(x);
    CHECK(r.ess > 0.0);
    CHECK(r.ess <= static_cast<double>(n));
    CHECK(r.truncation_lag % 2 == 0);

    // Paired autocovariance sums up to the truncation lag are positive.
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    auto gamma = [&](std::size_t lag) {
      double s = 0.0;
      for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mean) * (x[t + lag] - mean);
      return s / static_cast<double>(n);
    };
    for (std::size_t m = 0; 2 * m < r.truncation_lag; ++m) CHECK(gamma(2 * m) + gamma(2 * m + 1) > 0.0);

    // Affine invariance.
    const double a = nhmc::testing::uniform(rng, -50.0, 50.0);
    const double b = std::exp(nhmc::testing::uniform(rng, -3.0, 3.0)) * (rep % 2 ? 1.0 : -1.0);
    std::vector<double> y(x);
    for (auto& v : y) v = a + b * v;
    const EssResult ry = effective_sample_size(y);
    CHECK(std::abs(ry.ess - r.ess) <= 1e-8 * r.ess);
  }
}

TEST_CASE("ESS edge cases") {
  std::vector<double> constant(50, 3.25);
  const EssResult r = effective_sample_size(constant);
  CHECK(r.degenerate);
  CHECK(r.ess == 1.0);
  std::vector<double> short_series(9, 0.0);
  CHECK_THROWS(effective_sample_size(short_series));
}

TEST_CASE("accepted move lengths") {
  SUBCASE("all rejected") {
    const ChainTrace t = make_trace({vec({0, 0}), vec({0, 0}), vec({0, 0})}, {0, 0});
    const auto m = accepted_move_lengths(t);
    REQUIRE(m.size() == 2);
    CHECK(m[0].empty());
    CHECK(m[1].empty());
    CHECK(std::isnan(quantile(m[0], 0.5)));
  }
  SUBCASE("unit steps") {
    std::vector<ParamVector> states;
    for (int i = 0; i < 20; ++i) states.push_back(vec({double(i), -double(i)}));
    const ChainTrace t = make_trace(states, std::vector<int>(19, 1));
    for (const auto& series : accepted_move_lengths(t)) {
      CHECK(series.size() == 19);
      for (double v : series) CHECK(v == 1.0);
    }
  }
  SUBCASE("count matches accepted flags") {
    Rng rng(8);
    std::vector<ParamVector> states{vec({0, 0})};
    std::vector<int> flags;
    for (int i = 0; i < 500; ++i) {
      const bool acc = uniform01(rng) < 0.4;
      flags.push_back(acc);
      states.push_back(acc ? ParamVector(states.back() + nhmc::testing::random_theta(rng, 2, -1, 1))
                           : states.back());
    }
    const ChainTrace t = make_trace(states, flags);
    const auto m = accepted_move_lengths(t);
    long total = 0;
    for (int f : flags) total += f;
    CHECK(static_cast<long>(m[0].size()) == total);
    CHECK(acceptance_rate(t) == doctest::Approx(double(total) / 500.0));
  }
}

TEST_CASE("posterior mean MSE") {
  const Vector truth = vec({0.1, 0.4});
  std::vector<Vector> exact(3, truth);
  CHECK(posterior_mean_mse(exact, truth) == 0.0);

  // i.i.d. samples: MSE of the mean is about trace(Σ)/n.
  Matrix cov(2, 2);
  cov << 0.04, 0.01, 0.01, 0.02;
  const Eigen::LLT<Matrix> llt(cov);
  const Matrix l = llt.matrixL();
  const std::size_t n = 400;
  Rng rng(12);
  std::vector<Vector> means;
  for (int c = 0; c < 20; ++c) {
    Vector sum = Vector::Zero(2);
    for (std::size_t i = 0; i < n; ++i) sum += truth + l * vec({standard_normal(rng), standard_normal(rng)});
    means.push_back(sum / double(n));
  }
  const double mse = posterior_mean_mse(means, truth);
  const double expected = cov.trace() / double(n);
  CHECK(mse > expected / 2.0);
  CHECK(mse < expected * 2.0);
  CHECK_THROWS(posterior_mean_mse(std::span<const Vector>{}, truth));
}

TEST_CASE("quantiles interpolate linearly") {
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.0) == 1.0);
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 1.0) == 4.0);
  CHECK(quantile({7.0}, 0.25) == 7.0);
}

TEST_CASE("summaries without ground truth leave oracle fields empty") {
  Rng rng(3);
  std::vector<ParamVector> states{vec({0, 0})};
  std::vector<int> flags;
  for (int i = 0; i < 100; ++i) {
    flags.push_back(i % 3 != 0);
    states.push_back(flags.back() ? nhmc::testing::random_theta(rng, 2, -1, 1) : states.back());
  }
  const ChainTrace t = make_trace(states, flags);
  const ChainSummary s = summarize(t, "nEx", 1, 0, std::nullopt, std::nullopt);
  CHECK_FALSE(s.squared_error.has_value());
  CHECK_FALSE(s.kl.has_value());
  CHECK(s.iterations == 100);
  CHECK(s.ess.size() == 2);
  for (double e : s.ess) {
    CHECK(e > 0.0);
    CHECK(e <= 100.0);
  }
  CHECK(s.acceptance >= 0.0);
  CHECK(s.acceptance <= 1.0);
  CHECK(s.wall_seconds == doctest::Approx(0.1));
}

TEST_CASE("summaries with ground truth") {
  const PosteriorGrid grid([](const ParamVector& t) { return -0.5 * t.squaredNorm() * 100.0; },
                           vec({-0.5, -0.5}), vec({0.5, 0.5}), 100);
  Rng rng(4);
  const auto samples = grid.sample(2000, rng);
  std::vector<ParamVector> states{samples.front()};
  states.insert(states.end(), samples.begin(), samples.end());
  const ChainTrace t = make_trace(states, std::vector<int>(samples.size(), 1));
  GroundTruth truth;
  truth.posterior_mean = grid.mean();
  truth.grid = &grid;
  truth.kl_bin_size = 0.05;
  const ChainSummary s = summarize(t, "nHMC", 10, 2, 0.3, 6, truth);
  REQUIRE(s.squared_error.has_value());
  REQUIRE(s.kl.has_value());
  CHECK(*s.squared_error < 1e-3);
  CHECK(*s.kl < 0.1);
}

TEST_CASE("summary CSV round trip with aggregate rows") {
  std::vector<ChainSummary> rows;
  Rng rng(6);
  for (const char* algo : {"nHMC", "nEx"}) {
    for (std::size_t c = 0; c < 3; ++c) {
      ChainSummary s;
      s.algorithm = algo;
      s.draws_per_step = 10;
      s.chain = c;
      s.iterations = 1500;
      s.acceptance = uniform01(rng);
      if (std::string(algo) == "nHMC") {
        s.epsilon = uniform01(rng);
        s.steps = 4;
      }
      s.forward_draws = 12345 + c;
      s.ess = {uniform01(rng) * 1000.0, 1.0 / 3.0};
      s.mean = vec({uniform01(rng) - 0.5, 0.1 + 1e-17});
      s.squared_error = 1e-7 * uniform01(rng);
      s.move_quartiles = {{0.1, 0.2, 0.3}, {std::nan(""), std::nan(""), std::nan("")}};
      rows.push_back(s);
    }
  }
  const auto dir = scratch_dir("summary");
  write_summary_csv(dir / "summary.csv", rows, 2);
  const CsvTable table = read_csv(dir / "summary.csv");
  REQUIRE(table.rows.size() == 10);
  CHECK(table.header.size() == 8 + 2 + 2 + 2 + 6);
  for (const auto& r : table.rows) CHECK(r.size() == table.header.size());

  // Chain rows carry exact values.
  const auto& first = table.rows[0];
  CHECK(first[0] == "nHMC");
  CHECK(first[2] == "0");
  CHECK(std::stod(first[4]) == rows[0].acceptance);
  CHECK(std::stod(first[5]) == *rows[0].epsilon);
  CHECK(std::stod(first[8]) == rows[0].ess[0]);
  CHECK(std::stod(first[9]) == 1.0 / 3.0);
  CHECK(std::stod(first[11]) == rows[0].mean[1]);
  CHECK(std::stod(first[12]) == *rows[0].squared_error);
  CHECK(first[13].empty());
  CHECK(first[17].empty());

  // Aggregates.
  CHECK(table.rows[3][2] == "mean");
  CHECK(table.rows[4][2] == "sd");
  const double mean_acc = (rows[0].acceptance + rows[1].acceptance + rows[2].acceptance) / 3.0;
  CHECK(std::stod(table.rows[3][4]) == doctest::Approx(mean_acc).epsilon(1e-14));
  CHECK(table.rows[8][0] == "nEx");
  CHECK(table.rows[8][5].empty());  // no ε for exchange

  write_timing_csv(dir / "timing.csv", rows);
  const CsvTable timing = read_csv(dir / "timing.csv");
  CHECK(timing.rows.size() == 6);
  CHECK(timing.header[3] == "wall_seconds");
}

TEST_CASE("trace CSV keeps the start state and full precision") {
  const ChainTrace t = make_trace({vec({0.1, 0.2}), vec({0.30000000000000004, 0.2}), vec({0.30000000000000004, 0.2})}, {1, 0});
  const auto dir = scratch_dir("trace");
  write_trace_csv(dir / "chain_0.csv", t);
  const CsvTable table = read_csv(dir / "chain_0.csv");
  REQUIRE(table.rows.size() == 3);
  CHECK(table.header == std::vector<std::string>{"iter", "theta_1", "theta_2", "accepted", "log_accept"});
  CHECK(table.rows[0][3].empty());
  CHECK(std::stod(table.rows[1][1]) == 0.30000000000000004);
  CHECK(table.rows[2][3] == "0");
  write_trace_timing_csv(dir / "chain_0_timing.csv", t);
  CHECK(read_csv(dir / "chain_0_timing.csv").rows.size() == 2);
}

TEST_CASE("Spearman rank correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{10, 20, 25, 70, 71};
  const std::vector<double> down{5, 4, 3, 2, 1};
  CHECK(spearman_correlation(x, up) == doctest::Approx(1.0));
  CHECK(spearman_correlation(x, down) == doctest::Approx(-1.0));
  const std::vector<double> ties{1, 1, 2, 2, 3};
  // Average ranks 1.5,1.5,3.5,3.5,5 against 1..5.
  CHECK(spearman_correlation(x, ties) == doctest::Approx(0.9486832980505138));
  const std::vector<double> flat(5, 2.0);
  CHECK(std::isnan(spearman_correlation(x, flat)));
}
