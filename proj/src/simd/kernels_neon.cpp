#include "nhmc/simd/kernels.hpp"

#include <arm_neon.h>

#include <algorithm>

namespace nhmc::simd::detail {

double combine_pairs_neon(const double* in, double* out, std::size_t count, double c0,
                          double c1, double running_max) {
  const float64x2_t v0 = vdupq_n_f64(c0);
  const float64x2_t v1 = vdupq_n_f64(c1);
  float64x2_t vmax = vdupq_n_f64(running_max);
  std::size_t i = 0;
  for (; i + 2 <= count; i += 2) {
    const float64x2x2_t pair = vld2q_f64(in + 2 * i);  // deinterleaves even/odd
    const float64x2_t r = vfmaq_f64(vmulq_f64(pair.val[1], v1), pair.val[0], v0);
    vst1q_f64(out + i, r);
    vmax = vmaxq_f64(vmax, r);
  }
  running_max = std::max(vgetq_lane_f64(vmax, 0), vgetq_lane_f64(vmax, 1));
  return combine_pairs_scalar(in + 2 * i, out + i, count - i, c0, c1, running_max);
}

std::size_t count_equal_neon(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t eq = vceqq_u8(vld1q_u8(a + i), vld1q_u8(b + i));
    count += vaddvq_u8(vshrq_n_u8(eq, 7));
  }
  return count + count_equal_scalar(a + i, b + i, n - i);
}

}  // namespace nhmc::simd::detail
