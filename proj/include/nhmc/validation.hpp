#pragma once

// Self-checks against the exact oracle. Each check is deterministic given its
// seed and reports named metrics alongside a pass flag.

#include "nhmc/core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nhmc {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  std::map<std::string, double> metrics;
};

/// Deliberate corruption applied inside the harness, to prove that checks bite.
enum class Fault { none, recursion, leapfrog };
Fault parse_fault(const std::string& text);

struct ValidationOptions {
  std::uint64_t seed = 1;
  Fault fault = Fault::none;
  std::size_t random_thetas = 20;
  std::size_t ratio_pairs = 10;
  std::size_t gradient_replications = 20;
  std::size_t gradient_draws = 10000;
  std::size_t gradient_sweeps = 200;
  std::size_t hmc_iterations = 50000;
  std::size_t degeneracy_iterations = 1000;
  std::size_t exchange_iterations = 100000;
  std::size_t exchange_sweeps = 50;
  std::size_t exchange_grid_resolution = 200;
  bool include_gradient = true;
  bool include_exchange = true;
};

/// Recursion against enumeration on small Potts lattices (K = 2 and 3), plus
/// transpose symmetry.
CheckResult check_recursion_vs_enumeration(const ValidationOptions& options);
/// Exhaustive expectation of the importance weight, and the one-segment
/// leapfrog estimator matching it bit for bit.
CheckResult check_ratio_unbiasedness(const ValidationOptions& options);
/// Monte Carlo gradient on 8x8 at θ = (0, 0.4) within 3 standard errors.
CheckResult check_gradient_estimator(const ValidationOptions& options);
/// Closed-form steps, momentum-flip reversibility and unit Jacobian.
CheckResult check_leapfrog(const ValidationOptions& options);
/// Standard HMC on a 2-d standard Gaussian, ε = 0.2, L = 10.
CheckResult check_hmc_gaussian(const ValidationOptions& options);
/// Noisy HMC fed exact moments matches exact-H acceptance per iteration.
CheckResult check_noisy_hmc_degeneracy(const ValidationOptions& options);
/// Exchange on 3x3 reaches binned KL < 0.1 against the exact grid.
CheckResult check_exchange_exactness(const ValidationOptions& options);

/// Every check in order; failures do not stop later checks.
std::vector<CheckResult> run_validation_suite(const ValidationOptions& options);

/// Machine-readable report (no timings).
void write_validation_report(const std::filesystem::path& path, const std::vector<CheckResult>& results,
                             const ValidationOptions& options);

}  // namespace nhmc
