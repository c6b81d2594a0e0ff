#pragma once

#include <cstddef>
#include <vector>

namespace peakforge::kern {

/// Arithmetic backends. `scalar` is the reference implementation; the SIMD
/// variants are equivalence-tested against it and selected at runtime from
/// CPU capabilities (override with set_backend() or PEAKFORGE_KERNELS=name).
enum class Backend { scalar, avx2, avx512 };

const char* backend_name(Backend b);
std::vector<Backend> supported_backends();
Backend active_backend();
/// Returns false (and leaves the active backend unchanged) if `b` is not
/// supported on this CPU or was not compiled in.
bool set_backend(Backend b);

// ---- vector primitives -------------------------------------------------

/// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

/// C[m,n] = A[m,k] * B[n,k]^T, overwriting C (accumulate=false) or adding to
/// it. All matrices row-major.
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate);
/// C[m,n] += A[m,p] * B[p,n]
void gemm_nn_acc(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t n, std::size_t p);
/// C[m,n] += A[p,m]^T * B[p,n]
void gemm_tn_acc(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t n, std::size_t p);

void relu(const double* x, double* y, std::size_t n);
/// gx[i] = x[i] > 0 ? gy[i] : 0
void relu_backward(const double* x, const double* gy, double* gx, std::size_t n);

double sum_sq_diff(const double* p, const double* t, std::size_t n);
double sum_abs_diff(const double* p, const double* t, std::size_t n);
/// Pinball sum: u = t - p; contributes q*u for u >= 0 and (q-1)*u otherwise.
double sum_pinball(const double* p, const double* t, double q, std::size_t n);

/// One fused Adam update. bc1/bc2 are the bias corrections 1/(1-beta1^t) and
/// 1/(1-beta2^t) for the current step t.
void adam_step(double* w, double* m, double* v, const double* g, std::size_t n,
               double lr, double beta1, double beta2, double eps,
               double bc1, double bc2);
void sgd_step(double* w, const double* g, std::size_t n, double lr);

}  // namespace peakforge::kern
