#pragma once

#include <cstddef>

namespace peakforge::kern {

/// Function-pointer table filled once per backend. kernels.cpp owns the
/// scalar table and the dispatch; the SIMD translation units each export a
/// filled table under a distinct symbol.
struct KernelTable {
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  void (*gemm_nt)(const double*, const double*, double*,
                  std::size_t, std::size_t, std::size_t, bool);
  void (*gemm_nn_acc)(const double*, const double*, double*,
                      std::size_t, std::size_t, std::size_t);
  void (*gemm_tn_acc)(const double*, const double*, double*,
                      std::size_t, std::size_t, std::size_t);
  void (*relu)(const double*, double*, std::size_t);
  void (*relu_backward)(const double*, const double*, double*, std::size_t);
  double (*sum_sq_diff)(const double*, const double*, std::size_t);
  double (*sum_abs_diff)(const double*, const double*, std::size_t);
  double (*sum_pinball)(const double*, const double*, double, std::size_t);
  void (*adam_step)(double*, double*, double*, const double*, std::size_t,
                    double, double, double, double, double, double);
  void (*sgd_step)(double*, const double*, std::size_t, double);
};

#ifdef PEAKFORGE_HAVE_AVX2
const KernelTable& avx2_table();
#endif
#ifdef PEAKFORGE_HAVE_AVX512
const KernelTable& avx512_table();
#endif

}  // namespace peakforge::kern
