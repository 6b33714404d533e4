// SPDX-License-Identifier: Apache-2.0
// Throughput comparison between the serial reference kernels and their
// OpenMP versions, plus a bit-equality check on every measured shape.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "proctrack/kernels.hpp"
#include "proctrack/rng.hpp"
#include "proctrack/tensor.hpp"

using namespace proctrack;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const std::chrono::duration<double, std::milli> dt = Clock::now() - start;
  return dt.count() / reps;
}

Tensor random_tensor(int r, int c, Rng& rng) {
  Tensor t = Tensor::zeros({r, c});
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

bool equal(const Tensor& a, const Tensor& b) { return a.data == b.data; }

void report(const std::string& name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name.c_str(),
              serial_ms, omp_ms, serial_ms / omp_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(1);
  int mismatches = 0;

  for (const int n : {64, 256, 512}) {
    const Tensor a = random_tensor(n, n, rng);
    const Tensor b = random_tensor(n, n, rng);
    Tensor c1 = Tensor::zeros({n, n});
    Tensor c2 = Tensor::zeros({n, n});
    const int reps = n <= 64 ? 200 : 20;
    const double s = time_ms(
        [&] { kernels::matmul_serial(a.data.data(), b.data.data(), c1.data.data(), n, n, n); },
        reps);
    const double p = time_ms(
        [&] { kernels::matmul_omp(a.data.data(), b.data.data(), c2.data.data(), n, n, n); },
        reps);
    const bool same = equal(c1, c2);
    mismatches += !same;
    report("matmul " + std::to_string(n) + "x" + std::to_string(n), s, p, same);
  }

  for (const int n : {1 << 16, 1 << 20}) {
    const Tensor x = random_tensor(1, n, rng);
    Tensor y1 = Tensor::zeros({1, n});
    Tensor y2 = Tensor::zeros({1, n});
    const double s =
        time_ms([&] { kernels::tanh_serial(x.data.data(), y1.data.data(), x.data.size()); }, 50);
    const double p =
        time_ms([&] { kernels::tanh_omp(x.data.data(), y2.data.data(), x.data.size()); }, 50);
    const bool same = equal(y1, y2);
    mismatches += !same;
    report("tanh n=" + std::to_string(n), s, p, same);
  }

  for (const int rows : {256, 2048}) {
    const int cols = 256;
    const Tensor x = random_tensor(rows, cols, rng);
    Tensor y1 = Tensor::zeros({rows, cols});
    Tensor y2 = Tensor::zeros({rows, cols});
    const double s = time_ms(
        [&] { kernels::softmax_rows_serial(x.data.data(), y1.data.data(), rows, cols); }, 50);
    const double p = time_ms(
        [&] { kernels::softmax_rows_omp(x.data.data(), y2.data.data(), rows, cols); }, 50);
    const bool same = equal(y1, y2);
    mismatches += !same;
    report("softmax " + std::to_string(rows) + "x" + std::to_string(cols), s, p, same);
  }

  if (mismatches > 0) {
    std::printf("%d kernel(s) disagree with the serial reference\n", mismatches);
    return 1;
  }
  return 0;
}
