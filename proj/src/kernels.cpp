// SPDX-License-Identifier: Apache-2.0
#include "proctrack/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace proctrack::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline void matmul_row(const double* a_row, const double* b, double* c_row,
                       int inner, int cols) {
  std::fill(c_row, c_row + cols, 0.0);
  for (int k = 0; k < inner; ++k) {
    const double av = a_row[k];
    if (av == 0.0) continue;
    const double* b_row = b + static_cast<std::size_t>(k) * cols;
    for (int j = 0; j < cols; ++j) c_row[j] += av * b_row[j];
  }
}

inline void softmax_row(const double* x, double* out, int cols) {
  double mx = x[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    out[j] = std::exp(x[j] - mx);
    sum += out[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < cols; ++j) out[j] *= inv;
}
}  // namespace

void matmul_serial(const double* a, const double* b, double* c,
                   int rows, int inner, int cols) {
  for (int i = 0; i < rows; ++i) {
    matmul_row(a + static_cast<std::size_t>(i) * inner, b,
               c + static_cast<std::size_t>(i) * cols, inner, cols);
  }
}

void matmul_omp(const double* a, const double* b, double* c,
                int rows, int inner, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    matmul_row(a + static_cast<std::size_t>(i) * inner, b,
               c + static_cast<std::size_t>(i) * cols, inner, cols);
  }
}

void tanh_serial(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

void tanh_omp(const double* x, double* out, std::size_t n) {
  const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < nn; ++i) out[i] = std::tanh(x[i]);
}

void softmax_rows_serial(const double* x, double* out, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    softmax_row(x + static_cast<std::size_t>(i) * cols,
                out + static_cast<std::size_t>(i) * cols, cols);
  }
}

void softmax_rows_omp(const double* x, double* out, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    softmax_row(x + static_cast<std::size_t>(i) * cols,
                out + static_cast<std::size_t>(i) * cols, cols);
  }
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

void matmul(const double* a, const double* b, double* c, int rows, int inner, int cols) {
  if (parallel_enabled())
    matmul_omp(a, b, c, rows, inner, cols);
  else
    matmul_serial(a, b, c, rows, inner, cols);
}

void tanh(const double* x, double* out, std::size_t n) {
  if (parallel_enabled())
    tanh_omp(x, out, n);
  else
    tanh_serial(x, out, n);
}

void softmax_rows(const double* x, double* out, int rows, int cols) {
  if (parallel_enabled())
    softmax_rows_omp(x, out, rows, cols);
  else
    softmax_rows_serial(x, out, rows, cols);
}

}  // namespace proctrack::kernels
