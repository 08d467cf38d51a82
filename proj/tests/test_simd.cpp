#include "doctest.h"
#include "test_support.hpp"

#include "nhmc/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

using namespace nhmc;

namespace {

std::vector<simd::Isa> available_isas() {
  std::vector<simd::Isa> out;
  for (auto isa : {simd::Isa::scalar, simd::Isa::avx2, simd::Isa::neon}) {
    if (simd::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

}  // namespace

TEST_CASE("scalar kernel is always available") {
  CHECK(simd::isa_available(simd::Isa::scalar));
  CHECK(simd::isa_available(simd::active_isa()));
  MESSAGE("active ISA: " << std::string(simd::isa_name(simd::active_isa())));
}

TEST_CASE("transfer step variants agree with the scalar reference") {
  Rng rng(3);
  for (std::size_t h : {1u, 2u, 3u, 4u, 5u, 7u, 10u}) {
    const std::size_t n = std::size_t{1} << h;
    std::vector<double> in(n);
    for (auto& v : in) v = testing::uniform(rng, 0.0, 2.0);
    simd::TransferCoefficients c{};
    for (auto& a : c.coeff)
      for (auto& b : a)
        for (auto& v : b) v = testing::uniform(rng, 0.1, 3.0);
    std::vector<double> reference(n);
    const double ref_max = simd::transfer_step_k2(in, reference, c, simd::Isa::scalar);
    // Direct definition: out[x·P + m] = Σ_l in[m·2 + l] · coeff[x][top bit of m][l].
    const std::size_t half = n / 2;
    for (std::size_t x = 0; x < 2; ++x) {
      for (std::size_t m = 0; m < half; ++m) {
        const std::size_t up = h >= 2 ? (m >> (h - 2)) & 1 : 1;
        const double expect = in[2 * m] * c.coeff[x][up][0] + in[2 * m + 1] * c.coeff[x][up][1];
        CHECK(reference[x * half + m] == doctest::Approx(expect).epsilon(1e-15));
      }
    }
    CHECK(ref_max == *std::max_element(reference.begin(), reference.end()));
    for (auto isa : available_isas()) {
      std::vector<double> out(n);
      const double got_max = simd::transfer_step_k2(in, out, c, isa);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(out[i] - reference[i]) <= 1e-15 * std::abs(reference[i]));
      CHECK(std::abs(got_max - ref_max) <= 1e-15 * ref_max);
    }
  }
}

TEST_CASE("agreement counting variants agree with the scalar reference") {
  Rng rng(8);
  for (std::size_t n : {0u, 1u, 15u, 31u, 32u, 33u, 64u, 100u, 1000u}) {
    std::vector<std::uint8_t> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<std::uint8_t>(rng() % 3);
      b[i] = static_cast<std::uint8_t>(rng() % 3);
    }
    std::size_t expect = 0;
    for (std::size_t i = 0; i < n; ++i) expect += a[i] == b[i];
    for (auto isa : available_isas()) CHECK(simd::count_equal(a, b, isa) == expect);
  }
}

TEST_CASE("the active ISA can be forced") {
  const auto original = simd::active_isa();
  simd::set_active_isa(simd::Isa::scalar);
  CHECK(simd::active_isa() == simd::Isa::scalar);
  simd::set_active_isa(original);
  CHECK(simd::active_isa() == original);
}
