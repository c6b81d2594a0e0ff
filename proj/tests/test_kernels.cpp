#include <doctest.h>

#include <cmath>
#include <vector>

#include "peakforge/kernels.hpp"
#include "peakforge/rng.hpp"

namespace kern = peakforge::kern;
using peakforge::Rng;

namespace {

std::vector<double> randvec(Rng& r, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = r.uniform(lo, hi);
  return v;
}

void check_close(const std::vector<double>& got, const std::vector<double>& want,
                 double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double err = std::abs(got[i] - want[i]);
    const double bound = tol * (1.0 + std::abs(want[i]));
    if (err > bound) {
      CAPTURE(i);
      CAPTURE(got[i]);
      CAPTURE(want[i]);
      REQUIRE(err <= bound);
    }
  }
}

// Runs fn under each supported backend and checks the outputs agree with the
// scalar run within tol. fn writes its result into the passed vector.
template <class Fn>
void for_each_backend_close(Fn fn, double tol) {
  const kern::Backend before = kern::active_backend();
  REQUIRE(kern::set_backend(kern::Backend::scalar));
  std::vector<double> ref;
  fn(ref);
  for (kern::Backend b : kern::supported_backends()) {
    REQUIRE(kern::set_backend(b));
    std::vector<double> out;
    fn(out);
    INFO("backend ", kern::backend_name(b));
    check_close(out, ref, tol);
  }
  kern::set_backend(before);
}

}  // namespace

TEST_CASE("scalar backend is always supported") {
  auto sup = kern::supported_backends();
  REQUIRE(!sup.empty());
  CHECK(sup.front() == kern::Backend::scalar);
  for (kern::Backend b : sup) {
    CHECK(kern::set_backend(b));
    CHECK(kern::active_backend() == b);
  }
  kern::set_backend(kern::Backend::scalar);
}

TEST_CASE("axpy matches reference on all backends") {
  Rng r(1);
  for (std::size_t n : {0ul, 1ul, 3ul, 7ul, 8ul, 31ul, 64ul, 1000ul}) {
    const auto x = randvec(r, n);
    const auto y0 = randvec(r, n);
    for_each_backend_close(
        [&](std::vector<double>& out) {
          out = y0;
          kern::axpy(0.37, x.data(), out.data(), n);
        },
        1e-14);
  }
}

TEST_CASE("dot matches reference on all backends") {
  Rng r(2);
  for (std::size_t n : {0ul, 1ul, 5ul, 16ul, 33ul, 4097ul}) {
    const auto a = randvec(r, n);
    const auto b = randvec(r, n);
    for_each_backend_close(
        [&](std::vector<double>& out) { out = {kern::dot(a.data(), b.data(), n)}; },
        1e-12);
  }
}

TEST_CASE("dot of a basis vector picks out one element") {
  std::vector<double> a(10, 0.0), b(10);
  a[7] = 1.0;
  for (std::size_t i = 0; i < 10; ++i) b[i] = double(i) * 1.5;
  CHECK(kern::dot(a.data(), b.data(), 10) == doctest::Approx(10.5));
}

namespace {

struct GemmShape {
  std::size_t m, n, k;
};

// Covers register-tile tails in every dimension plus k/p block boundaries.
const GemmShape kShapes[] = {{1, 1, 1},   {2, 4, 8},    {3, 5, 7},
                             {5, 33, 17}, {4, 70, 64},  {8, 8, 513},
                             {17, 9, 1030}, {47, 130, 3}};

}  // namespace

TEST_CASE("gemm_nt matches reference on all backends") {
  Rng r(3);
  for (const auto& s : kShapes) {
    const auto a = randvec(r, s.m * s.k);
    const auto b = randvec(r, s.n * s.k);
    const auto c0 = randvec(r, s.m * s.n);
    for (bool acc : {false, true}) {
      for_each_backend_close(
          [&](std::vector<double>& out) {
            out = c0;
            kern::gemm_nt(a.data(), b.data(), out.data(), s.m, s.n, s.k, acc);
          },
          1e-11);
    }
  }
}

TEST_CASE("gemm_nt against a hand-rolled triple loop") {
  Rng r(4);
  const std::size_t m = 6, n = 5, k = 9;
  const auto a = randvec(r, m * k);
  const auto b = randvec(r, n * k);
  std::vector<double> c(m * n, 0.0), want(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t q = 0; q < k; ++q)
        want[i * n + j] += a[i * k + q] * b[j * k + q];
  kern::gemm_nt(a.data(), b.data(), c.data(), m, n, k, false);
  check_close(c, want, 1e-12);
}

TEST_CASE("gemm_nn_acc matches reference on all backends") {
  Rng r(5);
  for (const auto& s : kShapes) {
    const auto a = randvec(r, s.m * s.k);
    const auto b = randvec(r, s.k * s.n);
    const auto c0 = randvec(r, s.m * s.n);
    for_each_backend_close(
        [&](std::vector<double>& out) {
          out = c0;
          kern::gemm_nn_acc(a.data(), b.data(), out.data(), s.m, s.n, s.k);
        },
        1e-11);
  }
}

TEST_CASE("gemm_tn_acc matches reference on all backends") {
  Rng r(6);
  for (const auto& s : kShapes) {
    const auto a = randvec(r, s.k * s.m);
    const auto b = randvec(r, s.k * s.n);
    const auto c0 = randvec(r, s.m * s.n);
    for_each_backend_close(
        [&](std::vector<double>& out) {
          out = c0;
          kern::gemm_tn_acc(a.data(), b.data(), out.data(), s.m, s.n, s.k);
        },
        1e-11);
  }
}

TEST_CASE("gemm_tn_acc equals explicit transpose") {
  Rng r(7);
  const std::size_t m = 5, n = 6, p = 4;
  const auto a = randvec(r, p * m);
  const auto b = randvec(r, p * n);
  std::vector<double> c(m * n, 0.0), want(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t q = 0; q < p; ++q)
        want[i * n + j] += a[q * m + i] * b[q * n + j];
  kern::gemm_tn_acc(a.data(), b.data(), c.data(), m, n, p);
  check_close(c, want, 1e-12);
}

TEST_CASE("relu and relu_backward handle zeros and negatives") {
  std::vector<double> x = {-1.0, 0.0, 2.5, -0.0, 1e-300, -3.0};
  std::vector<double> gy = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  std::vector<double> y(x.size()), gx(x.size());
  kern::relu(x.data(), y.data(), x.size());
  kern::relu_backward(x.data(), gy.data(), gx.data(), x.size());
  CHECK(y == std::vector<double>{0.0, 0.0, 2.5, 0.0, 1e-300, 0.0});
  CHECK(gx == std::vector<double>{0.0, 0.0, 3.0, 0.0, 5.0, 0.0});

  Rng r(8);
  for (std::size_t n : {3ul, 17ul, 256ul}) {
    auto xx = randvec(r, n);
    auto gg = randvec(r, n);
    for_each_backend_close(
        [&](std::vector<double>& out) {
          out.resize(2 * n);
          kern::relu(xx.data(), out.data(), n);
          kern::relu_backward(xx.data(), gg.data(), out.data() + n, n);
        },
        0.0);
  }
}

TEST_CASE("loss sums match reference on all backends") {
  Rng r(9);
  for (std::size_t n : {1ul, 9ul, 100ul, 1025ul}) {
    const auto p = randvec(r, n);
    const auto t = randvec(r, n);
    for_each_backend_close(
        [&](std::vector<double>& out) {
          out = {kern::sum_sq_diff(p.data(), t.data(), n),
                 kern::sum_abs_diff(p.data(), t.data(), n),
                 kern::sum_pinball(p.data(), t.data(), 0.75, n),
                 kern::sum_pinball(p.data(), t.data(), 0.25, n)};
        },
        1e-12);
  }
}

TEST_CASE("pinball sum follows the piecewise definition") {
  // u = t - p: over-prediction weighted by 1-q, under-prediction by q.
  const std::vector<double> p = {0.0, 2.0, 1.0};
  const std::vector<double> t = {1.0, 1.0, 1.0};
  const double q = 0.75;
  // u = {1, -1, 0} -> 0.75 + 0.25 + 0
  CHECK(kern::sum_pinball(p.data(), t.data(), q, 3) == doctest::Approx(1.0));
}

TEST_CASE("adam_step single step against hand computation") {
  double w = 0.0, m = 0.0, v = 0.0;
  const double g = 1.0;
  // Step 1 with standard betas: m_hat = g, v_hat = g^2, w -= lr * 1/(1+eps).
  kern::adam_step(&w, &m, &v, &g, 1, 0.1, 0.9, 0.999, 1e-8, 1.0 / (1.0 - 0.9),
                  1.0 / (1.0 - 0.999));
  CHECK(m == doctest::Approx(0.1));
  CHECK(v == doctest::Approx(0.001));
  CHECK(w == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam_step matches reference on all backends") {
  Rng r(10);
  for (std::size_t n : {1ul, 8ul, 23ul, 512ul}) {
    const auto w0 = randvec(r, n);
    const auto m0 = randvec(r, n, 0.0, 0.1);
    const auto v0 = randvec(r, n, 0.0, 0.1);
    const auto g = randvec(r, n);
    for_each_backend_close(
        [&](std::vector<double>& out) {
          auto w = w0;
          auto m = m0;
          auto v = v0;
          for (int step = 1; step <= 3; ++step) {
            const double bc1 = 1.0 / (1.0 - std::pow(0.9, step));
            const double bc2 = 1.0 / (1.0 - std::pow(0.999, step));
            kern::adam_step(w.data(), m.data(), v.data(), g.data(), n, 0.01,
                            0.9, 0.999, 1e-8, bc1, bc2);
          }
          out = w;
          out.insert(out.end(), m.begin(), m.end());
          out.insert(out.end(), v.begin(), v.end());
        },
        1e-13);
  }
}

TEST_CASE("sgd_step matches reference on all backends") {
  Rng r(11);
  const std::size_t n = 37;
  const auto w0 = randvec(r, n);
  const auto g = randvec(r, n);
  for_each_backend_close(
      [&](std::vector<double>& out) {
        out = w0;
        kern::sgd_step(out.data(), g.data(), n, 0.05);
      },
      1e-14);
}
