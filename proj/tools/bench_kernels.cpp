// Times the serial reference kernels against their OpenMP variants on the
// shapes the models actually hit, and verifies that both backends agree
// bitwise before reporting speedups.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "seqmask/kernels.hpp"
#include "seqmask/rng.hpp"

namespace {

using seqmask::Rng;
namespace kernels = seqmask::kernels;

std::vector<double> random_buffer(std::int64_t n, Rng& rng) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (double& v : out) v = rng.normal();
  return out;
}

double time_ms(const std::function<void()>& fn, int repeats) {
  fn();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         repeats;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
  std::string name;
  double serial_ms = 0.0;
  double omp_ms = 0.0;
  bool match = false;
};

void print_row(const Row& row) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx  %s\n", row.name.c_str(),
              row.serial_ms, row.omp_ms, row.serial_ms / row.omp_ms,
              row.match ? "bitwise ok" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int repeats = 5;
  std::int64_t scale = 1;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--repeats" && i + 1 < argc)
      repeats = std::atoi(argv[++i]);
    else if (arg == "--scale" && i + 1 < argc)
      scale = std::atoll(argv[++i]);
    else {
      std::fprintf(stderr, "usage: bench_kernels [--repeats N] [--scale S]\n");
      return 2;
    }
  }

  Rng rng(12345);
  std::vector<Row> rows;
  bool all_match = true;

  struct MatShape {
    const char* name;
    std::int64_t n, k, m;
  };
  // n x k times k x m, roughly: batched token features times a weight matrix,
  // attention scores, and a tall-skinny head projection.
  const MatShape shapes[] = {
      {"matmul_nn 256x64*64x64", 256 * scale, 64, 64},
      {"matmul_nn 64x64*64x256", 64, 64, 256 * scale},
      {"matmul_nt 128x64*128x64", 128 * scale, 64, 128},
      {"matmul_tn 256x64*256x48", 256 * scale, 64, 48},
  };
  for (const MatShape& s : shapes) {
    const bool nt = std::strstr(s.name, "_nt") != nullptr;
    const bool tn = std::strstr(s.name, "_tn") != nullptr;
    const std::int64_t a_len = s.n * s.k;
    const std::int64_t b_len = nt ? s.m * s.k : (tn ? s.n * s.m : s.k * s.m);
    const std::int64_t c_len = tn ? s.k * s.m : s.n * s.m;
    const std::vector<double> a = random_buffer(a_len, rng);
    const std::vector<double> b = random_buffer(b_len, rng);
    std::vector<double> c_serial(static_cast<std::size_t>(c_len));
    std::vector<double> c_omp(static_cast<std::size_t>(c_len));
    auto run = [&](double* c, auto&& fn) {
      fn(a.data(), b.data(), c, s.n, s.k, s.m, false);
    };
    Row row;
    row.name = s.name;
    if (nt) {
      row.serial_ms = time_ms([&] { run(c_serial.data(), kernels::serial::matmul_nt); }, repeats);
      row.omp_ms = time_ms([&] { run(c_omp.data(), kernels::omp::matmul_nt); }, repeats);
    } else if (tn) {
      row.serial_ms = time_ms([&] { run(c_serial.data(), kernels::serial::matmul_tn); }, repeats);
      row.omp_ms = time_ms([&] { run(c_omp.data(), kernels::omp::matmul_tn); }, repeats);
    } else {
      row.serial_ms = time_ms([&] { run(c_serial.data(), kernels::serial::matmul_nn); }, repeats);
      row.omp_ms = time_ms([&] { run(c_omp.data(), kernels::omp::matmul_nn); }, repeats);
    }
    row.match = bitwise_equal(c_serial, c_omp);
    all_match = all_match && row.match;
    rows.push_back(row);
  }

  const std::int64_t ew_len = 1 << 20;
  const std::vector<double> x = random_buffer(ew_len * scale, rng);
  std::vector<double> y_serial(x.size());
  std::vector<double> y_omp(x.size());
  const std::int64_t len = static_cast<std::int64_t>(x.size());

  struct EwKernel {
    const char* name;
    void (*serial_fn)(const double*, double*, std::int64_t);
    void (*omp_fn)(const double*, double*, std::int64_t);
  };
  const EwKernel elementwise[] = {
      {"sigmoid 1M", kernels::serial::sigmoid, kernels::omp::sigmoid},
      {"tanh 1M", kernels::serial::tanh, kernels::omp::tanh},
      {"relu 1M", kernels::serial::relu, kernels::omp::relu},
  };
  for (const EwKernel& k : elementwise) {
    Row row;
    row.name = k.name;
    row.serial_ms =
        time_ms([&] { k.serial_fn(x.data(), y_serial.data(), len); }, repeats);
    row.omp_ms = time_ms([&] { k.omp_fn(x.data(), y_omp.data(), len); }, repeats);
    row.match = bitwise_equal(y_serial, y_omp);
    all_match = all_match && row.match;
    rows.push_back(row);
  }

  {
    const std::int64_t sm_rows = 2048 * scale;
    const std::int64_t sm_cols = 256;
    const std::vector<double> sx = random_buffer(sm_rows * sm_cols, rng);
    std::vector<double> sy_serial(sx.size());
    std::vector<double> sy_omp(sx.size());
    Row row;
    row.name = "softmax_rows 2048x256";
    row.serial_ms = time_ms(
        [&] { kernels::serial::softmax_rows(sx.data(), sy_serial.data(), sm_rows, sm_cols); },
        repeats);
    row.omp_ms = time_ms(
        [&] { kernels::omp::softmax_rows(sx.data(), sy_omp.data(), sm_rows, sm_cols); },
        repeats);
    row.match = bitwise_equal(sy_serial, sy_omp);
    all_match = all_match && row.match;
    rows.push_back(row);
  }

  std::printf("threads: %d, repeats: %d, scale: %lld\n", kernels::max_threads(),
              repeats, static_cast<long long>(scale));
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");
  for (const Row& row : rows) print_row(row);
  if (!all_match) {
    std::fprintf(stderr, "backend outputs diverged\n");
    return 1;
  }
  return 0;
}
