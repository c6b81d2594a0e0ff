#include "peakforge/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>

#include "peakforge/error.hpp"
#include "kernel_table.hpp"

namespace peakforge::kern {
namespace {

// ---- scalar reference --------------------------------------------------
// Deliberately plain loops; every other backend is tested against these.

void s_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double s_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void s_gemm_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += a[i * k + q] * b[j * k + q];
      if (accumulate)
        c[i * n + j] += s;
      else
        c[i * n + j] = s;
    }
  }
}

void s_gemm_nn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t q = 0; q < p; ++q) {
      const double av = a[i * p + q];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[q * n + j];
    }
}

void s_gemm_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t q = 0; q < p; ++q) {
      const double av = a[q * m + i];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[q * n + j];
    }
}

void s_relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

double s_sum_sq_diff(const double* p, const double* t, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  return s;
}

double s_sum_abs_diff(const double* p, const double* t, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(p[i] - t[i]);
  return s;
}

double s_sum_pinball(const double* p, const double* t, double q, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = t[i] - p[i];
    s += u >= 0.0 ? q * u : (q - 1.0) * u;
  }
  return s;
}

void s_adam_step(double* w, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
    const double vi = beta2 * v[i] + (1.0 - beta2) * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    w[i] -= lr * (mi * bc1) / (std::sqrt(vi * bc2) + eps);
  }
}

void s_sgd_step(double* w, const double* g, std::size_t n, double lr) {
  for (std::size_t i = 0; i < n; ++i) w[i] -= lr * g[i];
}

const KernelTable kScalarTable{s_axpy, s_dot, s_gemm_nt, s_gemm_nn_acc,
                               s_gemm_tn_acc, s_relu, s_relu_backward,
                               s_sum_sq_diff, s_sum_abs_diff, s_sum_pinball,
                               s_adam_step, s_sgd_step};

// ---- dispatch ----------------------------------------------------------

bool cpu_has(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(PEAKFORGE_HAVE_AVX2) && defined(__x86_64__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::avx512:
#if defined(PEAKFORGE_HAVE_AVX512) && defined(__x86_64__)
      return __builtin_cpu_supports("avx512f");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &kScalarTable;
#ifdef PEAKFORGE_HAVE_AVX2
    case Backend::avx2:
      return &avx2_table();
#endif
#ifdef PEAKFORGE_HAVE_AVX512
    case Backend::avx512:
      return &avx512_table();
#endif
    default:
      return nullptr;
  }
}

struct Dispatch {
  std::atomic<const KernelTable*> table{&kScalarTable};
  std::atomic<Backend> backend{Backend::scalar};
};

Backend pick_default() {
  if (const char* env = std::getenv("PEAKFORGE_KERNELS")) {
    const std::string name = env;
    Backend b;
    if (name == "scalar")
      b = Backend::scalar;
    else if (name == "avx2")
      b = Backend::avx2;
    else if (name == "avx512")
      b = Backend::avx512;
    else
      throw ConfigError("PEAKFORGE_KERNELS: unknown backend '" + name +
                        "' (expected scalar, avx2, or avx512)");
    if (!cpu_has(b))
      throw ConfigError("PEAKFORGE_KERNELS: backend '" + name +
                        "' is not available on this CPU/build");
    return b;
  }
  if (cpu_has(Backend::avx512)) return Backend::avx512;
  if (cpu_has(Backend::avx2)) return Backend::avx2;
  return Backend::scalar;
}

Dispatch& dispatch() {
  static Dispatch d;
  static std::once_flag once;
  std::call_once(once, [] {
    const Backend b = pick_default();
    d.table.store(table_for(b), std::memory_order_relaxed);
    d.backend.store(b, std::memory_order_relaxed);
  });
  return d;
}

inline const KernelTable& T() {
  return *dispatch().table.load(std::memory_order_relaxed);
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::avx512: return "avx512";
  }
  return "?";
}

std::vector<Backend> supported_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::scalar, Backend::avx2, Backend::avx512})
    if (cpu_has(b)) out.push_back(b);
  return out;
}

Backend active_backend() { return dispatch().backend.load(std::memory_order_relaxed); }

bool set_backend(Backend b) {
  if (!cpu_has(b)) return false;
  Dispatch& d = dispatch();
  d.table.store(table_for(b), std::memory_order_relaxed);
  d.backend.store(b, std::memory_order_relaxed);
  return true;
}

void axpy(double a, const double* x, double* y, std::size_t n) { T().axpy(a, x, y, n); }
double dot(const double* a, const double* b, std::size_t n) { return T().dot(a, b, n); }
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
  T().gemm_nt(a, b, c, m, n, k, accumulate);
}
void gemm_nn_acc(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t n, std::size_t p) {
  T().gemm_nn_acc(a, b, c, m, n, p);
}
void gemm_tn_acc(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t n, std::size_t p) {
  T().gemm_tn_acc(a, b, c, m, n, p);
}
void relu(const double* x, double* y, std::size_t n) { T().relu(x, y, n); }
void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  T().relu_backward(x, gy, gx, n);
}
double sum_sq_diff(const double* p, const double* t, std::size_t n) {
  return T().sum_sq_diff(p, t, n);
}
double sum_abs_diff(const double* p, const double* t, std::size_t n) {
  return T().sum_abs_diff(p, t, n);
}
double sum_pinball(const double* p, const double* t, double q, std::size_t n) {
  return T().sum_pinball(p, t, q, n);
}
void adam_step(double* w, double* m, double* v, const double* g, std::size_t n,
               double lr, double beta1, double beta2, double eps,
               double bc1, double bc2) {
  T().adam_step(w, m, v, g, n, lr, beta1, beta2, eps, bc1, bc2);
}
void sgd_step(double* w, const double* g, std::size_t n, double lr) {
  T().sgd_step(w, g, n, lr);
}

}  // namespace peakforge::kern
