// Compiled with -mavx2 -mfma; only called after a runtime CPU check.
#include "nhmc/simd/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <bit>

namespace nhmc::simd::detail {

double combine_pairs_avx2(const double* in, double* out, std::size_t count, double c0,
                          double c1, double running_max) {
  const __m256d v0 = _mm256_set1_pd(c0);
  const __m256d v1 = _mm256_set1_pd(c1);
  __m256d vmax = _mm256_set1_pd(running_max);
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d a = _mm256_loadu_pd(in + 2 * i);      // e0 o0 e1 o1
    const __m256d b = _mm256_loadu_pd(in + 2 * i + 4);  // e2 o2 e3 o3
    const __m256d even = _mm256_unpacklo_pd(a, b);      // e0 e2 e1 e3
    const __m256d odd = _mm256_unpackhi_pd(a, b);       // o0 o2 o1 o3
    __m256d r = _mm256_fmadd_pd(even, v0, _mm256_mul_pd(odd, v1));
    r = _mm256_permute4x64_pd(r, 0b11011000);           // r0 r1 r2 r3
    _mm256_storeu_pd(out + i, r);
    vmax = _mm256_max_pd(vmax, r);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, vmax);
  running_max = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  return combine_pairs_scalar(in + 2 * i, out + i, count - i, c0, c1, running_max);
}

std::size_t count_equal_avx2(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
    const auto mask = static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(va, vb)));
    count += static_cast<std::size_t>(std::popcount(mask));
  }
  return count + count_equal_scalar(a + i, b + i, n - i);
}

}  // namespace nhmc::simd::detail
