#include "nhmc/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <algorithm>

namespace nhmc::simd {
namespace {

Isa detect_best() noexcept {
#if defined(NHMC_HAVE_AVX2)
  if (isa_available(Isa::avx2)) return Isa::avx2;
#endif
#if defined(NHMC_HAVE_NEON)
  return Isa::neon;
#endif
  return Isa::scalar;
}

Isa initial_isa() noexcept {
  if (const char* env = std::getenv("NHMC_SIMD")) {
    const std::string_view name(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (name == isa_name(isa) && isa_available(isa)) return isa;
    }
  }
  return detect_best();
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

}  // namespace

const char* isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(NHMC_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(NHMC_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument(std::string("SIMD variant not available: ") + isa_name(isa));
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

double transfer_step_k2(std::span<const double> in, std::span<double> out,
                        const TransferCoefficients& c, Isa isa) {
  const std::size_t half = in.size() / 2;
  const std::size_t quarter = half / 2;
  auto combine = detail::combine_pairs_scalar;
#if defined(NHMC_HAVE_AVX2)
  if (isa == Isa::avx2) combine = detail::combine_pairs_avx2;
#endif
#if defined(NHMC_HAVE_NEON)
  if (isa == Isa::neon) combine = detail::combine_pairs_neon;
#endif
  double running_max = 0.0;
  for (int x = 0; x < 2; ++x) {
    double* dst = out.data() + static_cast<std::size_t>(x) * half;
    running_max = combine(in.data(), dst, quarter, c.coeff[x][0][0], c.coeff[x][0][1],
                          running_max);
    running_max = combine(in.data() + 2 * quarter, dst + quarter, half - quarter,
                          c.coeff[x][1][0], c.coeff[x][1][1], running_max);
  }
  return running_max;
}

std::size_t count_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                        Isa isa) {
  const std::size_t n = std::min(a.size(), b.size());
#if defined(NHMC_HAVE_AVX2)
  if (isa == Isa::avx2) return detail::count_equal_avx2(a.data(), b.data(), n);
#endif
#if defined(NHMC_HAVE_NEON)
  if (isa == Isa::neon) return detail::count_equal_neon(a.data(), b.data(), n);
#endif
  (void)isa;
  return detail::count_equal_scalar(a.data(), b.data(), n);
}

}  // namespace nhmc::simd
