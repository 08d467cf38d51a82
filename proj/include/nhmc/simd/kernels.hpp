#pragma once

// Data-parallel inner loops of the exact oracle and the lattice statistics.
// Every kernel has a scalar reference; vector variants are chosen at runtime
// and must agree with the reference (exactly for integer kernels, to rounding
// for floating-point ones).

#include <cstddef>
#include <cstdint>
#include <span>

namespace nhmc::simd {

enum class Isa { scalar, avx2, neon };

const char* isa_name(Isa isa) noexcept;

/// True when the variant was compiled in and the running CPU supports it.
bool isa_available(Isa isa) noexcept;

/// Best available variant, unless overridden with set_active_isa or the
/// NHMC_SIMD environment variable (scalar|avx2|neon).
Isa active_isa() noexcept;

/// Forces a variant; throws std::invalid_argument if unavailable.
void set_active_isa(Isa isa);

/// Weights for one site of the two-state transfer recursion.
/// coeff[x][up][left] multiplies the incoming weight of a boundary whose
/// leaving site is `left`, when the new site takes state x and its upper
/// neighbour is `up`. Node factor and any rescaling are folded in.
struct TransferCoefficients {
  double coeff[2][2][2];
};

/// out[x*half + m] = in[2m] * coeff[x][u][0] + in[2m+1] * coeff[x][u][1],
/// with u = 0 for m < half/2 and u = 1 otherwise. in and out hold 2*half entries.
/// Returns max(out).
double transfer_step_k2(std::span<const double> in, std::span<double> out,
                        const TransferCoefficients& c, Isa isa);

inline double transfer_step_k2(std::span<const double> in, std::span<double> out,
                               const TransferCoefficients& c) {
  return transfer_step_k2(in, out, c, active_isa());
}

/// Number of positions i with a[i] == b[i]; a and b have equal length.
std::size_t count_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                        Isa isa);

inline std::size_t count_equal(std::span<const std::uint8_t> a,
                               std::span<const std::uint8_t> b) {
  return count_equal(a, b, active_isa());
}

namespace detail {
// One contiguous run of the transfer step: out[i] = c0*in[2i] + c1*in[2i+1].
double combine_pairs_scalar(const double* in, double* out, std::size_t count, double c0,
                            double c1, double running_max);
std::size_t count_equal_scalar(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
#if defined(NHMC_HAVE_AVX2)
double combine_pairs_avx2(const double* in, double* out, std::size_t count, double c0,
                          double c1, double running_max);
std::size_t count_equal_avx2(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
#endif
#if defined(NHMC_HAVE_NEON)
double combine_pairs_neon(const double* in, double* out, std::size_t count, double c0,
                          double c1, double running_max);
std::size_t count_equal_neon(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
#endif
}  // namespace detail

}  // namespace nhmc::simd
