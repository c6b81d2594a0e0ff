#include <immintrin.h>

#include "simd_body.hpp"

namespace peakforge::kern {
namespace {

struct Avx512Vec {
  using reg = __m512d;
  static constexpr std::size_t width = 8;
  static reg load(const double* p) { return _mm512_loadu_pd(p); }
  static void store(double* p, reg v) { _mm512_storeu_pd(p, v); }
  static reg set1(double x) { return _mm512_set1_pd(x); }
  static reg zero() { return _mm512_setzero_pd(); }
  static reg add(reg a, reg b) { return _mm512_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm512_sub_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm512_mul_pd(a, b); }
  static reg div(reg a, reg b) { return _mm512_div_pd(a, b); }
  static reg sqrt(reg a) { return _mm512_sqrt_pd(a); }
  static reg max(reg a, reg b) { return _mm512_max_pd(a, b); }
  static reg fmadd(reg a, reg b, reg c) { return _mm512_fmadd_pd(a, b, c); }
  static reg abs(reg a) { return _mm512_abs_pd(a); }
  static reg select_gt0(reg x, reg v) {
    const __mmask8 m = _mm512_cmp_pd_mask(x, zero(), _CMP_GT_OQ);
    return _mm512_maskz_mov_pd(m, v);
  }
  static double hsum(reg v) { return _mm512_reduce_add_pd(v); }
};

// 4x4 dot tiles: 16 zmm accumulators plus operand registers out of 32.
using K = SimdKernels<Avx512Vec, 4, 4, 4>;
const KernelTable kTable = K::table();

}  // namespace

const KernelTable& avx512_table() { return kTable; }

}  // namespace peakforge::kern
