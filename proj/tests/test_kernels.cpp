#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "seqmask/kernels.hpp"
#include "seqmask/rng.hpp"

using namespace seqmask;

namespace {

std::vector<double> random_vec(Rng& rng, std::int64_t n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

// Oracle: unoptimized triple loop, untransposed layout handled explicitly.
std::vector<double> naive_nn(const std::vector<double>& a,
                             const std::vector<double>& b, std::int64_t n,
                             std::int64_t k, std::int64_t m) {
  std::vector<double> c(static_cast<std::size_t>(n * m), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j)
      for (std::int64_t l = 0; l < k; ++l)
        c[i * m + j] += a[i * k + l] * b[l * m + j];
  return c;
}

bool bitwise_equal(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) return false;
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul_nn matches the naive oracle") {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_int(7));
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.uniform_int(7));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.uniform_int(7));
    auto a = random_vec(rng, n * k);
    auto b = random_vec(rng, k * m);
    auto expected = naive_nn(a, b, n, k, m);
    std::vector<double> c(static_cast<std::size_t>(n * m));
    kernels::serial::matmul_nn(a.data(), b.data(), c.data(), n, k, m, false);
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul_nt and matmul_tn agree with explicitly transposed inputs") {
  Rng rng(12);
  const std::int64_t n = 5, k = 4, m = 6;
  auto a = random_vec(rng, n * k);
  auto b = random_vec(rng, m * k);  // used as b^T
  std::vector<double> bt(static_cast<std::size_t>(k * m));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < k; ++j) bt[j * m + i] = b[i * k + j];
  auto expected = naive_nn(a, bt, n, k, m);
  std::vector<double> c(static_cast<std::size_t>(n * m));
  kernels::serial::matmul_nt(a.data(), b.data(), c.data(), n, k, m, false);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  // tn: c = a^T b with a (n x k), b2 (n x m) -> c (k x m)
  auto b2 = random_vec(rng, n * m);
  std::vector<double> at(static_cast<std::size_t>(k * n));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < k; ++j) at[j * n + i] = a[i * k + j];
  auto expected_tn = naive_nn(at, b2, k, n, m);
  std::vector<double> c2(static_cast<std::size_t>(k * m));
  kernels::serial::matmul_tn(a.data(), b2.data(), c2.data(), n, k, m, false);
  for (std::size_t i = 0; i < c2.size(); ++i)
    CHECK(c2[i] == doctest::Approx(expected_tn[i]).epsilon(1e-12));
}

TEST_CASE("accumulate adds into the output instead of overwriting") {
  Rng rng(13);
  const std::int64_t n = 3, k = 3, m = 3;
  auto a = random_vec(rng, n * k);
  auto b = random_vec(rng, k * m);
  auto base = naive_nn(a, b, n, k, m);
  std::vector<double> c(base);
  kernels::serial::matmul_nn(a.data(), b.data(), c.data(), n, k, m, true);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(c[i] == doctest::Approx(2.0 * base[i]).epsilon(1e-12));
}

TEST_CASE("OpenMP kernels are bitwise identical to the serial reference") {
  Rng rng(14);
  for (int rep = 0; rep < 3; ++rep) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_int(40));
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.uniform_int(40));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.uniform_int(40));
    auto a = random_vec(rng, n * k);
    auto b = random_vec(rng, k * m);
    auto bt = random_vec(rng, m * k);
    auto b2 = random_vec(rng, n * m);

    std::vector<double> s(static_cast<std::size_t>(n * m)),
        p(static_cast<std::size_t>(n * m));
    kernels::serial::matmul_nn(a.data(), b.data(), s.data(), n, k, m, false);
    kernels::omp::matmul_nn(a.data(), b.data(), p.data(), n, k, m, false);
    CHECK(bitwise_equal(s, p));

    kernels::serial::matmul_nt(a.data(), bt.data(), s.data(), n, k, m, false);
    kernels::omp::matmul_nt(a.data(), bt.data(), p.data(), n, k, m, false);
    CHECK(bitwise_equal(s, p));

    std::vector<double> st(static_cast<std::size_t>(k * m)),
        pt(static_cast<std::size_t>(k * m));
    kernels::serial::matmul_tn(a.data(), b2.data(), st.data(), n, k, m, false);
    kernels::omp::matmul_tn(a.data(), b2.data(), pt.data(), n, k, m, false);
    CHECK(bitwise_equal(st, pt));

    auto x = random_vec(rng, n * m);
    std::vector<double> ys(x.size()), yp(x.size());
    kernels::serial::sigmoid(x.data(), ys.data(),
                             static_cast<std::int64_t>(x.size()));
    kernels::omp::sigmoid(x.data(), yp.data(),
                          static_cast<std::int64_t>(x.size()));
    CHECK(bitwise_equal(ys, yp));
    kernels::serial::tanh(x.data(), ys.data(),
                          static_cast<std::int64_t>(x.size()));
    kernels::omp::tanh(x.data(), yp.data(),
                       static_cast<std::int64_t>(x.size()));
    CHECK(bitwise_equal(ys, yp));
    kernels::serial::relu(x.data(), ys.data(),
                          static_cast<std::int64_t>(x.size()));
    kernels::omp::relu(x.data(), yp.data(),
                       static_cast<std::int64_t>(x.size()));
    CHECK(bitwise_equal(ys, yp));
    kernels::serial::softmax_rows(x.data(), ys.data(), n, m);
    kernels::omp::softmax_rows(x.data(), yp.data(), n, m);
    CHECK(bitwise_equal(ys, yp));
  }
}

TEST_CASE("softmax rows are positive and sum to one") {
  Rng rng(15);
  const std::int64_t rows = 6, cols = 9;
  auto x = random_vec(rng, rows * cols);
  // Large magnitudes must not overflow thanks to max subtraction.
  x[3] = 800.0;
  x[10] = -800.0;
  std::vector<double> y(x.size());
  kernels::serial::softmax_rows(x.data(), y.data(), rows, cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      CHECK(y[r * cols + c] >= 0.0);
      CHECK(std::isfinite(y[r * cols + c]));
      sum += y[r * cols + c];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("backend dispatch routes to the selected implementation") {
  const auto before = kernels::backend();
  kernels::set_backend(kernels::Backend::serial);
  CHECK(kernels::backend() == kernels::Backend::serial);
  kernels::set_backend(kernels::Backend::openmp);
  CHECK(kernels::backend() == kernels::Backend::openmp);
  Rng rng(16);
  auto a = random_vec(rng, 12), b = random_vec(rng, 12);
  std::vector<double> c1(9), c2(9);
  kernels::set_backend(kernels::Backend::serial);
  kernels::matmul_nn(a.data(), b.data(), c1.data(), 3, 4, 3);
  kernels::set_backend(kernels::Backend::openmp);
  kernels::matmul_nn(a.data(), b.data(), c2.data(), 3, 4, 3);
  CHECK(bitwise_equal(c1, c2));
  kernels::set_backend(before);
}

TEST_CASE("thread cap is recorded") {
  kernels::set_max_threads(2);
  CHECK(kernels::max_threads() == 2);
  kernels::set_max_threads(0);
}
