#pragma once

#include <cstdint>

// Dense inner loops shared by the tensor engine. Every kernel exists in a
// serial variant and an OpenMP variant; the parallel variants split work only
// across independent output elements, so both backends produce bitwise
// identical results for any thread count. The serial variants are kept as the
// reference implementation for tests and for the bench_kernels comparison.
namespace seqmask::kernels {

enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);

// Caps the OpenMP thread count used by kernels and by parallel evaluation
// loops. n <= 0 resets to the hardware default.
void set_max_threads(int n);
int max_threads();

namespace serial {
// c = a * b (n x k times k x m); accumulate adds into c instead of storing.
void matmul_nn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate);
// c = a * b^T (a is n x k, b is m x k).
void matmul_nt(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate);
// c = a^T * b (a is n x k, b is n x m, c is k x m).
void matmul_tn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate);
void sigmoid(const double* x, double* y, std::int64_t n);
void tanh(const double* x, double* y, std::int64_t n);
void relu(const double* x, double* y, std::int64_t n);
void softmax_rows(const double* x, double* y, std::int64_t rows,
                  std::int64_t cols);
}  // namespace serial

namespace omp {
void matmul_nn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate);
void sigmoid(const double* x, double* y, std::int64_t n);
void tanh(const double* x, double* y, std::int64_t n);
void relu(const double* x, double* y, std::int64_t n);
void softmax_rows(const double* x, double* y, std::int64_t rows,
                  std::int64_t cols);
}  // namespace omp

// Dispatch through the active backend.
void matmul_nn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, std::int64_t n,
               std::int64_t k, std::int64_t m, bool accumulate = false);
void sigmoid(const double* x, double* y, std::int64_t n);
void tanh(const double* x, double* y, std::int64_t n);
void relu(const double* x, double* y, std::int64_t n);
void softmax_rows(const double* x, double* y, std::int64_t rows,
                  std::int64_t cols);

}  // namespace seqmask::kernels
