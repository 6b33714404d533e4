// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "proctrack/tensor.hpp"

namespace proctrack::kernels {

// Dense inner-loop kernels. Every kernel comes in a `_serial` reference
// version and an `_omp` version parallelized over independent output
// elements; each output element is accumulated in the same order in both, so
// results are bit-identical for any thread count. Tests assert that equality
// and tools/bench_kernels compares throughput.

// C[r,c] = A[r,k] * B[k,c]
void matmul_serial(const double* a, const double* b, double* c,
                   int rows, int inner, int cols);
void matmul_omp(const double* a, const double* b, double* c,
                int rows, int inner, int cols);

// out[i] = tanh(x[i])
void tanh_serial(const double* x, double* out, std::size_t n);
void tanh_omp(const double* x, double* out, std::size_t n);

// row-wise softmax with max-shift; x and out are [rows, cols]
void softmax_rows_serial(const double* x, double* out, int rows, int cols);
void softmax_rows_omp(const double* x, double* out, int rows, int cols);

// Dispatchers used by the tape: route to _omp when enabled (default), else
// to _serial. Toggle exists for A/B testing; outputs are identical either way.
bool parallel_enabled();
void set_parallel(bool enabled);

void matmul(const double* a, const double* b, double* c, int rows, int inner, int cols);
void tanh(const double* x, double* out, std::size_t n);
void softmax_rows(const double* x, double* out, int rows, int cols);

// Tensor-shaped conveniences; out must be pre-shaped by the caller.
inline void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  matmul(a.data.data(), b.data.data(), out.data.data(), a.rows(), a.cols(), b.cols());
}
inline void tanh_map(const Tensor& x, Tensor& out) {
  tanh(x.data.data(), out.data.data(), x.data.size());
}
inline void softmax_rows(const Tensor& x, Tensor& out) {
  softmax_rows(x.data.data(), out.data.data(), x.rows(), x.cols());
}

}  // namespace proctrack::kernels
