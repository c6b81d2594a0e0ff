#pragma once

// Kernel bodies shared by the AVX2 and AVX-512 translation units. Each TU
// defines a vector-trait struct (load/store/fmadd/...) and instantiates
// SimdKernels with its own register tile shape. Elementwise math matches the
// scalar reference operation-for-operation; only reductions and the gemm
// k-loop reassociate, so sums can differ from scalar by rounding only.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "kernel_table.hpp"

namespace peakforge::kern {

// Register tile sizes: MR x NR accumulators for gemm_nt (each a full
// horizontal dot), MR x NV row-vectors for the broadcast-form gemms.
template <class V, int MR, int NR, int NV>
struct SimdKernels {
  using reg = typename V::reg;
  static constexpr std::size_t W = V::width;
  // k-block sized so an MR-row A slab plus an NR-row B slab stay in L1.
  static constexpr std::size_t KB = 512;
  static constexpr std::size_t PB = 512;

  static void axpy(double a, const double* x, double* y, std::size_t n) {
    const reg va = V::set1(a);
    std::size_t i = 0;
    for (; i + 4 * W <= n; i += 4 * W) {
      V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
      V::store(y + i + W, V::fmadd(va, V::load(x + i + W), V::load(y + i + W)));
      V::store(y + i + 2 * W, V::fmadd(va, V::load(x + i + 2 * W), V::load(y + i + 2 * W)));
      V::store(y + i + 3 * W, V::fmadd(va, V::load(x + i + 3 * W), V::load(y + i + 3 * W)));
    }
    for (; i + W <= n; i += W)
      V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
  }

  static double dot(const double* a, const double* b, std::size_t n) {
    reg acc0 = V::zero(), acc1 = V::zero(), acc2 = V::zero(), acc3 = V::zero();
    std::size_t i = 0;
    for (; i + 4 * W <= n; i += 4 * W) {
      acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
      acc1 = V::fmadd(V::load(a + i + W), V::load(b + i + W), acc1);
      acc2 = V::fmadd(V::load(a + i + 2 * W), V::load(b + i + 2 * W), acc2);
      acc3 = V::fmadd(V::load(a + i + 3 * W), V::load(b + i + 3 * W), acc3);
    }
    for (; i + W <= n; i += W) acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
    double s = V::hsum(V::add(V::add(acc0, acc1), V::add(acc2, acc3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
  }

  // C[m,n] = A[m,k] * B[n,k]^T. Dot-form: MR rows of A against NR rows of B,
  // k blocked so both slabs sit in L1 while the tile is swept.
  static void gemm_nt(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
    if (k == 0) {
      if (!accumulate) std::fill(c, c + m * n, 0.0);
      return;
    }
    for (std::size_t k0 = 0; k0 < k; k0 += KB) {
      const std::size_t kw = k - k0 < KB ? k - k0 : KB;
      const bool first = k0 == 0;
      for (std::size_t j0 = 0; j0 < n; j0 += NR) {
        const std::size_t jw = n - j0 < NR ? n - j0 : NR;
        const double* brow[NR];
        for (int j = 0; j < NR; ++j)
          brow[j] = b + (j0 + ((std::size_t)j < jw ? j : 0)) * k + k0;
        for (std::size_t i0 = 0; i0 < m; i0 += MR) {
          const std::size_t iw = m - i0 < MR ? m - i0 : MR;
          const double* arow[MR];
          for (int i = 0; i < MR; ++i)
            arow[i] = a + (i0 + ((std::size_t)i < iw ? i : 0)) * k + k0;
          reg acc[MR][NR];
          for (int i = 0; i < MR; ++i)
            for (int j = 0; j < NR; ++j) acc[i][j] = V::zero();
          std::size_t q = 0;
          for (; q + W <= kw; q += W) {
            reg va[MR];
            for (int i = 0; i < MR; ++i) va[i] = V::load(arow[i] + q);
            for (int j = 0; j < NR; ++j) {
              const reg vb = V::load(brow[j] + q);
              for (int i = 0; i < MR; ++i) acc[i][j] = V::fmadd(va[i], vb, acc[i][j]);
            }
          }
          for (std::size_t i = 0; i < iw; ++i) {
            for (std::size_t j = 0; j < jw; ++j) {
              double s = V::hsum(acc[i][j]);
              for (std::size_t t = q; t < kw; ++t) s += arow[i][t] * brow[j][t];
              double* cell = c + (i0 + i) * n + j0 + j;
              if (first && !accumulate)
                *cell = s;
              else
                *cell += s;
            }
          }
        }
      }
    }
  }

  // Broadcast-form gemm covering C += A*B (AT=false, A is [m,p]) and
  // C += A^T*B (AT=true, A is [p,m]). B is [p,n], C is [m,n].
  template <bool AT>
  static void gemm_bcast_acc(const double* a, const double* b, double* c,
                             std::size_t m, std::size_t n, std::size_t p) {
    const std::size_t jtile = NV * W;
    for (std::size_t p0 = 0; p0 < p; p0 += PB) {
      const std::size_t pw = p - p0 < PB ? p - p0 : PB;
      std::size_t j0 = 0;
      for (; j0 + jtile <= n; j0 += jtile) {
        for (std::size_t i0 = 0; i0 < m; i0 += MR) {
          const std::size_t iw = m - i0 < MR ? m - i0 : MR;
          reg acc[MR][NV];
          for (std::size_t i = 0; i < iw; ++i)
            for (int v = 0; v < NV; ++v)
              acc[i][v] = V::load(c + (i0 + i) * n + j0 + v * W);
          for (std::size_t q = p0; q < p0 + pw; ++q) {
            reg vb[NV];
            for (int v = 0; v < NV; ++v) vb[v] = V::load(b + q * n + j0 + v * W);
            for (std::size_t i = 0; i < iw; ++i) {
              const double aval = AT ? a[q * m + i0 + i] : a[(i0 + i) * p + q];
              const reg va = V::set1(aval);
              for (int v = 0; v < NV; ++v) acc[i][v] = V::fmadd(va, vb[v], acc[i][v]);
            }
          }
          for (std::size_t i = 0; i < iw; ++i)
            for (int v = 0; v < NV; ++v)
              V::store(c + (i0 + i) * n + j0 + v * W, acc[i][v]);
        }
      }
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t q = p0; q < p0 + pw; ++q) {
          const double aval = AT ? a[q * m + i] : a[i * p + q];
          for (std::size_t j = j0; j < n; ++j) c[i * n + j] += aval * b[q * n + j];
        }
      }
    }
  }

  static void gemm_nn_acc(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t n, std::size_t p) {
    gemm_bcast_acc<false>(a, b, c, m, n, p);
  }

  static void gemm_tn_acc(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t n, std::size_t p) {
    gemm_bcast_acc<true>(a, b, c, m, n, p);
  }

  static void relu(const double* x, double* y, std::size_t n) {
    const reg z = V::zero();
    std::size_t i = 0;
    for (; i + W <= n; i += W) V::store(y + i, V::max(V::load(x + i), z));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  }

  static void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
    std::size_t i = 0;
    for (; i + W <= n; i += W)
      V::store(gx + i, V::select_gt0(V::load(x + i), V::load(gy + i)));
    for (; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
  }

  static double sum_sq_diff(const double* pr, const double* t, std::size_t n) {
    reg acc0 = V::zero(), acc1 = V::zero();
    std::size_t i = 0;
    for (; i + 2 * W <= n; i += 2 * W) {
      const reg d0 = V::sub(V::load(pr + i), V::load(t + i));
      const reg d1 = V::sub(V::load(pr + i + W), V::load(t + i + W));
      acc0 = V::fmadd(d0, d0, acc0);
      acc1 = V::fmadd(d1, d1, acc1);
    }
    for (; i + W <= n; i += W) {
      const reg d = V::sub(V::load(pr + i), V::load(t + i));
      acc0 = V::fmadd(d, d, acc0);
    }
    double s = V::hsum(V::add(acc0, acc1));
    for (; i < n; ++i) {
      const double d = pr[i] - t[i];
      s += d * d;
    }
    return s;
  }

  static double sum_abs_diff(const double* pr, const double* t, std::size_t n) {
    reg acc0 = V::zero(), acc1 = V::zero();
    std::size_t i = 0;
    for (; i + 2 * W <= n; i += 2 * W) {
      acc0 = V::add(acc0, V::abs(V::sub(V::load(pr + i), V::load(t + i))));
      acc1 = V::add(acc1, V::abs(V::sub(V::load(pr + i + W), V::load(t + i + W))));
    }
    for (; i + W <= n; i += W)
      acc0 = V::add(acc0, V::abs(V::sub(V::load(pr + i), V::load(t + i))));
    double s = V::hsum(V::add(acc0, acc1));
    for (; i < n; ++i) {
      const double d = pr[i] - t[i];
      s += d < 0.0 ? -d : d;
    }
    return s;
  }

  static double sum_pinball(const double* pr, const double* t, double q, std::size_t n) {
    // q*u >= (q-1)*u exactly when u >= 0, so the branchless max form matches
    // the piecewise definition.
    const reg vq = V::set1(q);
    const reg vq1 = V::set1(q - 1.0);
    reg acc = V::zero();
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
      const reg u = V::sub(V::load(t + i), V::load(pr + i));
      acc = V::add(acc, V::max(V::mul(vq, u), V::mul(vq1, u)));
    }
    double s = V::hsum(acc);
    for (; i < n; ++i) {
      const double u = t[i] - pr[i];
      const double lo = (q - 1.0) * u, hi = q * u;
      s += hi > lo ? hi : lo;
    }
    return s;
  }

  static void adam_step(double* w, double* m, double* v, const double* g, std::size_t n,
                        double lr, double beta1, double beta2, double eps,
                        double bc1, double bc2) {
    const reg vb1 = V::set1(beta1), vb1c = V::set1(1.0 - beta1);
    const reg vb2 = V::set1(beta2), vb2c = V::set1(1.0 - beta2);
    const reg veps = V::set1(eps), vlr = V::set1(lr);
    const reg vbc1 = V::set1(bc1), vbc2 = V::set1(bc2);
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
      const reg vg = V::load(g + i);
      const reg vm = V::fmadd(vb1, V::load(m + i), V::mul(vb1c, vg));
      const reg vv = V::fmadd(vb2, V::load(v + i), V::mul(vb2c, V::mul(vg, vg)));
      V::store(m + i, vm);
      V::store(v + i, vv);
      const reg denom = V::add(V::sqrt(V::mul(vv, vbc2)), veps);
      const reg step = V::div(V::mul(vlr, V::mul(vm, vbc1)), denom);
      V::store(w + i, V::sub(V::load(w + i), step));
    }
    for (; i < n; ++i) {
      const double gi = g[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v[i] + (1.0 - beta2) * (gi * gi);
      m[i] = mi;
      v[i] = vi;
      w[i] -= lr * (mi * bc1) / (std::sqrt(vi * bc2) + eps);
    }
  }

  static void sgd_step(double* w, const double* g, std::size_t n, double lr) {
    const reg vlr = V::set1(-lr);
    std::size_t i = 0;
    for (; i + W <= n; i += W)
      V::store(w + i, V::fmadd(vlr, V::load(g + i), V::load(w + i)));
    for (; i < n; ++i) w[i] -= lr * g[i];
  }

  static KernelTable table() {
    return KernelTable{axpy, dot, gemm_nt, gemm_nn_acc, gemm_tn_acc,
                       relu, relu_backward, sum_sq_diff, sum_abs_diff,
                       sum_pinball, adam_step, sgd_step};
  }
};

}  // namespace peakforge::kern
