#include "nhmc/validation.hpp"

#include "nhmc/diagnostics.hpp"
#include "nhmc/exact_oracle.hpp"
#include "nhmc/gibbs_models.hpp"
#include "nhmc/samplers.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nhmc {
namespace {

ParamVector random_theta(Rng& rng, std::size_t d, double lo, double hi) {
  ParamVector t(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform01(rng);
  return t;
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Rng check_rng(const ValidationOptions& o, const char* name) {
  return Rng(derive_seed({o.seed, hash_label("validate"), hash_label(name)}));
}

Configuration decode(std::size_t code, std::size_t sites, std::size_t k) {
  Configuration x(sites);
  for (auto& v : x) {
    v = static_cast<SiteState>(code % k);
    code /= k;
  }
  return x;
}

template <typename Body>
CheckResult guarded(const char* name, Body&& body) {
  CheckResult r;
  r.name = name;
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

double accept_prob(double log_rho) { return log_rho >= 0.0 ? 1.0 : std::exp(log_rho); }

}  // namespace

Fault parse_fault(const std::string& text) {
  if (text == "none") return Fault::none;
  if (text == "recursion") return Fault::recursion;
  if (text == "leapfrog") return Fault::leapfrog;
  throw ConfigError("unknown fault '" + text + "' (none | recursion | leapfrog)");
}

CheckResult check_recursion_vs_enumeration(const ValidationOptions& o) {
  return guarded("recursion_vs_enumeration", [&](CheckResult& r) {
    Rng rng = check_rng(o, "recursion");
    struct Shape {
      std::size_t h, w;
      int k;
    };
    const std::vector<Shape> shapes{{2, 2, 2}, {2, 3, 2}, {3, 3, 2}, {3, 4, 2}, {4, 4, 2},
                                    {2, 2, 3}, {2, 3, 3}, {3, 3, 3}};
    double worst = 0.0;
    std::size_t compared = 0;
    for (const auto& s : shapes) {
      const PottsModel model(s.h, s.w, s.k);
      const PottsModel transposed(s.w, s.h, s.k);
      for (std::size_t i = 0; i < o.random_thetas; ++i) {
        const ParamVector theta = random_theta(rng, model.dimension(), -1.0, 1.0);
        double recursion = exact_log_z_potts(model, theta);
        if (o.fault == Fault::recursion) recursion += 1e-6;
        const double brute = brute_force_log_z(model, theta);
        const double flipped = exact_log_z_potts(transposed, theta);
        worst = std::max({worst, std::abs(recursion - brute), std::abs(flipped - brute)});
        ++compared;
      }
    }
    r.metrics["max_abs_log_z_error"] = worst;
    r.metrics["comparisons"] = static_cast<double>(compared);
    r.passed = worst < 1e-9;
    r.detail = "max |log Z recursion - enumeration| = " + fmt(worst);
  });
}

CheckResult check_ratio_unbiasedness(const ValidationOptions& o) {
  return guarded("ratio_unbiasedness", [&](CheckResult& r) {
    const auto model = std::make_shared<const PottsModel>(3, 3);
    const auto log_z = exact_log_partition(*model);
    Rng rng = check_rng(o, "ratio");
    const Posterior post = Posterior::make(model, Configuration(9, 0), Prior::flat(2), 20);
    double worst = 0.0;
    bool bit_match = true;
    for (std::size_t pair = 0; pair < o.ratio_pairs; ++pair) {
      const ParamVector theta = random_theta(rng, 2, -1.0, 1.0);
      const ParamVector theta_prime = random_theta(rng, 2, -1.0, 1.0);
      const double lz_prime = log_z(theta_prime);
      double expectation = 0.0;
      for (std::size_t code = 0; code < 512; ++code) {
        Configuration x = decode(code, 9, 2);
        const double p = std::exp(model->potential(theta_prime, x) - lz_prime);
        const auto batch = AuxiliaryBatch::from_draws(*model, theta_prime, {std::move(x)});
        expectation += p * std::exp(ise_log_ratio(theta, theta_prime, batch).log_value);
      }
      const double exact = std::exp(exact_log_ratio(log_z, theta, theta_prime));
      worst = std::max(worst, std::abs(expectation - exact) / std::max(1.0, exact));

      const AuxiliaryBatch batch = draw_batch(post, theta_prime, 10, rng);
      const std::vector<ParamVector> path{theta, theta_prime};
      const std::vector<AuxiliaryBatch> batches{batch};
      bit_match = bit_match && lfe_log_ratio(path, batches).log_value ==
                                   ise_log_ratio(theta, theta_prime, batch).log_value;
    }
    r.metrics["max_rel_error"] = worst;
    r.metrics["lfe_bit_match"] = bit_match ? 1.0 : 0.0;
    r.passed = worst < 1e-9 && bit_match;
    r.detail = "max relative error " + fmt(worst) + (bit_match ? ", LFE(L=1) == ISE" : ", LFE(L=1) != ISE");
  });
}

CheckResult check_gradient_estimator(const ValidationOptions& o) {
  return guarded("gradient_estimator", [&](CheckResult& r) {
    const auto model = std::make_shared<const PottsModel>(8, 8);
    Rng rng = check_rng(o, "gradient");
    const Configuration observed = model->random_configuration(rng);
    const Posterior post = Posterior::make(model, observed, Prior::flat(2), o.gradient_sweeps);
    const ParamVector theta = (ParamVector(2) << 0.0, 0.4).finished();
    const Vector exact = post.observed_stats - exact_grad_log_z(exact_log_partition(*model), theta);
    std::size_t within = 0;
    double worst_z = 0.0;
    for (std::size_t rep = 0; rep < o.gradient_replications; ++rep) {
      const AuxiliaryBatch batch = draw_batch(post, theta, o.gradient_draws, rng);
      const Vector estimate = grad_log_post_estimate(post, theta, batch);
      const Vector se = sample_covariance(batch.stats).diagonal().cwiseSqrt() /
                        std::sqrt(static_cast<double>(o.gradient_draws));
      const double z = ((estimate - exact).cwiseAbs().array() / se.array()).maxCoeff();
      worst_z = std::max(worst_z, z);
      if (z <= 3.0) ++within;
    }
    const auto needed = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(o.gradient_replications)));
    r.metrics["within_3se"] = static_cast<double>(within);
    r.metrics["replications"] = static_cast<double>(o.gradient_replications);
    r.metrics["max_standardized_error"] = worst_z;
    r.passed = within >= needed;
    r.detail = std::to_string(within) + "/" + std::to_string(o.gradient_replications) +
               " replications within 3 standard errors";
  });
}

CheckResult check_leapfrog(const ValidationOptions& o) {
  return guarded("leapfrog", [&](CheckResult& r) {
    const double back_scale = o.fault == Fault::leapfrog ? 1.0 + 1e-3 : 1.0;

    // One-dimensional unit Gaussian: each step is a fixed linear map.
    const double eps = 0.3;
    Matrix step(2, 2);
    step << 1 - eps * eps / 2, eps, -eps + eps * eps * eps / 4, 1 - eps * eps / 2;
    Vector state(2);
    state << 0.7, -0.4;
    const auto path = leapfrog([](const ParamVector& x) -> Vector { return x; }, MassMatrix::identity(1),
                               {state.head(1), state.tail(1)}, eps, 12);
    double closed_form = 0.0;
    for (std::size_t l = 1; l < path.size(); ++l) {
      state = step * state;
      closed_form = std::max({closed_form, std::abs(path[l].theta[0] - state[0]),
                              std::abs(path[l].momentum[0] - state[1])});
    }

    // Correlated Gaussian and the 3x3 Potts posterior with exhaustive moments.
    const Matrix precision = mat2(2.0, 0.5, 0.5, 1.0);
    const PotentialGradientFn gaussian = [precision](const ParamVector& x) -> Vector { return precision * x; };
    const auto model = std::make_shared<const PottsModel>(3, 3);
    const EnumeratedModel enumerated(*model);
    const SuffStats obs = model->suff_stats(Configuration{1, 1, 0, 1, 1, 0, 0, 1, 1});
    const PotentialGradientFn potts = [&](const ParamVector& x) -> Vector {
      return -(obs - enumerated.expected_stats(x));
    };

    struct Case {
      const PotentialGradientFn* grad;
      MassMatrix mass;
      PhasePoint start;
      double eps;
      std::size_t steps;
    };
    Rng rng = check_rng(o, "leapfrog");
    const std::vector<Case> cases{
        {&gaussian, MassMatrix(mat2(1.5, 0.2, 0.2, 0.8)), {random_theta(rng, 2, -1, 1), random_theta(rng, 2, -1, 1)}, 0.17, 25},
        {&potts, MassMatrix(mat2(3.0, 1.0, 1.0, 6.0)), {random_theta(rng, 2, -0.3, 0.5), random_theta(rng, 2, -1, 1)}, 0.1, 8}};
    double reversibility = 0.0, jacobian = 0.0;
    for (const auto& c : cases) {
      const auto fwd = leapfrog(*c.grad, c.mass, c.start, c.eps, c.steps);
      const auto back = leapfrog(*c.grad, c.mass, {fwd.back().theta, -fwd.back().momentum}, c.eps * back_scale, c.steps);
      reversibility = std::max({reversibility, (back.back().theta - c.start.theta).norm(),
                                (back.back().momentum + c.start.momentum).norm()});

      const Eigen::Index d = c.start.theta.size();
      Matrix jac(2 * d, 2 * d);
      const double h = 1e-6;
      for (Eigen::Index col = 0; col < 2 * d; ++col) {
        PhasePoint plus = c.start, minus = c.start;
        (col < d ? plus.theta[col] : plus.momentum[col - d]) += h;
        (col < d ? minus.theta[col] : minus.momentum[col - d]) -= h;
        const PhasePoint fp = leapfrog(*c.grad, c.mass, plus, c.eps, c.steps).back();
        const PhasePoint fm = leapfrog(*c.grad, c.mass, minus, c.eps, c.steps).back();
        for (Eigen::Index row = 0; row < d; ++row) {
          jac(row, col) = (fp.theta[row] - fm.theta[row]) / (2 * h);
          jac(row + d, col) = (fp.momentum[row] - fm.momentum[row]) / (2 * h);
        }
      }
      jacobian = std::max(jacobian, std::abs(jac.determinant() - 1.0));
    }
    r.metrics["closed_form_error"] = closed_form;
    r.metrics["reversibility_error"] = reversibility;
    r.metrics["jacobian_error"] = jacobian;
    r.passed = closed_form < 1e-12 && reversibility < 1e-10 && jacobian < 1e-6;
    r.detail = "round trip " + fmt(reversibility) + ", |det - 1| " + fmt(jacobian);
  });
}

CheckResult check_hmc_gaussian(const ValidationOptions& o) {
  return guarded("hmc_gaussian", [&](CheckResult& r) {
    const auto target = TractableTarget::gaussian(Vector::Zero(2), Matrix::Identity(2, 2));
    const KernelSpec kernel = HmcKernel{target, MassMatrix::identity(2), 0.2, 10};
    const ChainTrace trace = run_chain(kernel, Vector::Constant(2, 0.5), o.hmc_iterations,
                                       derive_seed({o.seed, hash_label("validate"), hash_label("hmc")}));
    Matrix samples(2, static_cast<Eigen::Index>(o.hmc_iterations));
    for (std::size_t k = 0; k < o.hmc_iterations; ++k) samples.col(static_cast<Eigen::Index>(k)) = trace.states[k + 1];
    const double mean_err = chain_mean(trace).cwiseAbs().maxCoeff();
    const double cov_err = (sample_covariance(samples) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff();
    r.metrics["mean_error"] = mean_err;
    r.metrics["covariance_error"] = cov_err;
    r.metrics["acceptance"] = acceptance_rate(trace);
    r.passed = mean_err < 0.02 && cov_err < 0.05;
    r.detail = "mean error " + fmt(mean_err) + ", covariance error " + fmt(cov_err);
  });
}

CheckResult check_noisy_hmc_degeneracy(const ValidationOptions& o) {
  return guarded("noisy_hmc_degeneracy", [&](CheckResult& r) {
    const auto model = std::make_shared<const PottsModel>(3, 3);
    const Posterior post = Posterior::make(model, Configuration{1, 1, 0, 1, 1, 0, 0, 1, 1},
                                           Prior::box((Vector(2) << -1.0, 0.0).finished(),
                                                      (Vector(2) << 1.0, 1.5).finished()),
                                           20);
    const auto log_z = exact_log_partition(*model);
    const ExactNormalizer exact(log_z);
    TractableTarget target;
    target.log_density = [&](const Vector& t) {
      return t.dot(post.observed_stats) - log_z(t) + post.prior.log_density(t);
    };
    target.grad_log_density = [&](const Vector& t) -> Vector {
      return grad_log_post_from_mean(post, t, exact_grad_log_z(log_z, t), SupportPolicy::zero_prior_gradient);
    };
    const MassMatrix mass(mat2(2.0, 0.5, 0.5, 4.0));
    const std::uint64_t seed = derive_seed({o.seed, hash_label("validate"), hash_label("degeneracy")});
    Rng noisy_rng(seed), exact_rng(seed);
    ParamVector a = (ParamVector(2) << 0.1, 0.5).finished(), b = a;
    double worst = 0.0;
    std::size_t agree = 0, accepted = 0;
    for (std::size_t i = 0; i < o.degeneracy_iterations; ++i) {
      const Transition tn = noisy_hmc_iteration(post, exact, mass, a, 0.3, 4, noisy_rng);
      const Transition te = hmc_iteration(target, mass, b, 0.3, 4, exact_rng);
      worst = std::max(worst, std::abs(accept_prob(tn.log_accept) - accept_prob(te.log_accept)));
      agree += tn.accepted == te.accepted;
      accepted += tn.accepted;
      a = tn.theta;
      b = te.theta;
    }
    r.metrics["max_accept_prob_diff"] = worst;
    r.metrics["decision_agreement"] = static_cast<double>(agree) / static_cast<double>(o.degeneracy_iterations);
    r.metrics["acceptance"] = static_cast<double>(accepted) / static_cast<double>(o.degeneracy_iterations);
    r.passed = worst < 1e-8 && agree == o.degeneracy_iterations;
    r.detail = "max |acceptance probability difference| " + fmt(worst);
  });
}

CheckResult check_exchange_exactness(const ValidationOptions& o) {
  return guarded("exchange_exactness", [&](CheckResult& r) {
    const auto model = std::make_shared<const PottsModel>(3, 3);
    const Vector lower = (Vector(2) << -0.5, 0.0).finished();
    const Vector upper = (Vector(2) << 0.5, 1.0).finished();
    const auto post = std::make_shared<const Posterior>(
        Posterior::make(model, Configuration(9, 1), Prior::box(lower, upper), o.exchange_sweeps));
    const PosteriorGrid grid = exact_posterior_grid(exact_log_partition(*model), post->observed_stats,
                                                    post->prior, o.exchange_grid_resolution);
    // Half the standard deviation of the usual 2.38/√d random-walk scale.
    const Matrix cov = (2.38 * 2.38 / (4.0 * 2.0)) * grid.covariance();
    const ExchangeKernel kernel{post, cov, 0};
    const ChainTrace trace = run_chain(kernel, grid.mean(), o.exchange_iterations,
                                       derive_seed({o.seed, hash_label("validate"), hash_label("exchange")}));
    const std::vector<ParamVector> samples(trace.states.begin() + 1, trace.states.end());
    const KlResult kl = kl_divergence_binned(samples, grid, 0.01);
    r.metrics["kl"] = kl.value;
    r.metrics["acceptance"] = acceptance_rate(trace);
    r.metrics["mean_error"] = (chain_mean(trace) - grid.mean()).norm();
    r.passed = !kl.divergent && kl.value < 0.1;
    r.detail = "binned KL " + fmt(kl.value) + " after " + std::to_string(o.exchange_iterations) + " iterations";
  });
}

std::vector<CheckResult> run_validation_suite(const ValidationOptions& o) {
  std::vector<CheckResult> out;
  out.push_back(check_recursion_vs_enumeration(o));
  out.push_back(check_ratio_unbiasedness(o));
  if (o.include_gradient) out.push_back(check_gradient_estimator(o));
  out.push_back(check_leapfrog(o));
  out.push_back(check_hmc_gaussian(o));
  out.push_back(check_noisy_hmc_degeneracy(o));
  if (o.include_exchange) out.push_back(check_exchange_exactness(o));
  return out;
}

void write_validation_report(const std::filesystem::path& path, const std::vector<CheckResult>& results,
                             const ValidationOptions& options) {
  nlohmann::ordered_json report;
  report["seed"] = options.seed;
  report["fault"] = options.fault == Fault::none ? "none" : options.fault == Fault::recursion ? "recursion" : "leapfrog";
  bool all = true;
  auto& checks = report["checks"] = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json c;
    c["name"] = r.name;
    c["passed"] = r.passed;
    c["detail"] = r.detail;
    c["metrics"] = r.metrics;
    checks.push_back(std::move(c));
    all = all && r.passed;
  }
  report["passed"] = all;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << report.dump(2) << "\n";
}

}  // namespace nhmc
