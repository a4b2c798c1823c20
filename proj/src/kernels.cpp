#include "seqmask/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace seqmask::kernels {

namespace {
Backend g_backend = Backend::openmp;
int g_max_threads = 0;  // 0 = hardware default

// Work below this element count is not worth a parallel region.
constexpr std::int64_t kParallelCutoff = 16384;

int effective_threads() {
  int hw = omp_get_max_threads();
  return g_max_threads > 0 ? std::min(g_max_threads, hw) : hw;
}
}  // namespace

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

void set_max_threads(int n) {
  g_max_threads = n > 0 ? n : 0;
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return effective_threads(); }

// ---------------------------------------------------------------- serial

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * m + j];
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
  for (std::int64_t i = 0; i < k; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < n; ++p) acc += a[p * k + i] * b[p * m + j];
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

void sigmoid(const double* x, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void tanh(const double* x, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void relu(const double* x, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void softmax_rows(const double* x, double* y, std::int64_t rows,
                  std::int64_t cols) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xi = x + r * cols;
    double* yi = y + r * cols;
    double mx = xi[0];
    for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) yi[j] /= sum;
  }
}

}  // namespace serial

// ------------------------------------------------------------------ omp
//
// Each parallel loop iterates over output rows/elements whose inner reduction
// order matches the serial variant exactly.

namespace omp {

void matmul_nn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
#pragma omp parallel for schedule(static) if (n * m * k > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * m + j];
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
#pragma omp parallel for schedule(static) if (n * m * k > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
#pragma omp parallel for schedule(static) if (n * m * k > kParallelCutoff)
  for (std::int64_t i = 0; i < k; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < n; ++p) acc += a[p * k + i] * b[p * m + j];
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

void sigmoid(const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void tanh(const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void relu(const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void softmax_rows(const double* x, double* y, std::int64_t rows,
                  std::int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelCutoff)
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xi = x + r * cols;
    double* yi = y + r * cols;
    double mx = xi[0];
    for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) yi[j] /= sum;
  }
}

}  // namespace omp

// ------------------------------------------------------------- dispatch

#define SEQMASK_DISPATCH(fn, ...)            \
  do {                                       \
    if (g_backend == Backend::serial)        \
      serial::fn(__VA_ARGS__);               \
    else                                     \
      omp::fn(__VA_ARGS__);                  \
  } while (0)

void matmul_nn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
  SEQMASK_DISPATCH(matmul_nn, a, b, c, n, k, m, accumulate);
}
void matmul_nt(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
  SEQMASK_DISPATCH(matmul_nt, a, b, c, n, k, m, accumulate);
}
void matmul_tn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate) {
  SEQMASK_DISPATCH(matmul_tn, a, b, c, n, k, m, accumulate);
}
void sigmoid(const double* x, double* y, std::int64_t n) {
  SEQMASK_DISPATCH(sigmoid, x, y, n);
}
void tanh(const double* x, double* y, std::int64_t n) {
  SEQMASK_DISPATCH(tanh, x, y, n);
}
void relu(const double* x, double* y, std::int64_t n) {
  SEQMASK_DISPATCH(relu, x, y, n);
}
void softmax_rows(const double* x, double* y, std::int64_t rows,
                  std::int64_t cols) {
  SEQMASK_DISPATCH(softmax_rows, x, y, rows, cols);
}

#undef SEQMASK_DISPATCH

}  // namespace seqmask::kernels
