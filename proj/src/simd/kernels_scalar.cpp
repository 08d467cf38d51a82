#include "nhmc/simd/kernels.hpp"

#include <algorithm>

namespace nhmc::simd::detail {

double combine_pairs_scalar(const double* in, double* out, std::size_t count, double c0,
                            double c1, double running_max) {
  for (std::size_t i = 0; i < count; ++i) {
    const double v = c0 * in[2 * i] + c1 * in[2 * i + 1];
    out[i] = v;
    running_max = std::max(running_max, v);
  }
  return running_max;
}

std::size_t count_equal_scalar(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += (a[i] == b[i]);
  return count;
}

}  // namespace nhmc::simd::detail
