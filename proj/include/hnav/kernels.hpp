#pragma once

#include <cstddef>

namespace hnav::kernels {

// Dense kernels used by the tape and the inference paths. Each parallel
// kernel assigns every output element to exactly one loop iteration and
// accumulates inside that iteration in a fixed order, so results are
// bit-identical for any thread count and identical to the serial reference
// below. No reductions, no atomics.

// Returns true when a kernel touching `work` elements should run its
// OpenMP-parallel loop. Controlled by enable_parallel().
bool parallel_for(std::size_t work);

// Process-wide switch (default on). The serial reference namespace ignores it.
void enable_parallel(bool on);
bool parallel_enabled();

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate);

// C[m x k] (+)= A[m x n] * B^T, with B stored [k x n]
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k,
             bool accumulate);

// C[k x n] (+)= A^T * B, with A stored [m x k], B stored [m x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate);

// Per-sample weights: y[b, :] (+)= x[b, :] * W_b where W_b is w[b] reshaped
// [k x n]. x is [batch x k], w is [batch x (k*n)], y is [batch x n].
template <typename T>
void bmm(const T* x, const T* w, T* y, int batch, int k, int n,
         bool accumulate);

// dx[b, :] (+)= dy[b, :] * W_b^T
template <typename T>
void bmm_grad_x(const T* dy, const T* w, T* dx, int batch, int k, int n,
                bool accumulate);

// dW_b (+)= x[b, :]^T * dy[b, :]
template <typename T>
void bmm_grad_w(const T* x, const T* dy, T* dw, int batch, int k, int n,
                bool accumulate);

// y[m x n] = x[m x n] + bias[n] broadcast over rows
template <typename T>
void add_bias(const T* x, const T* bias, T* y, int m, int n);

// db[n] (+)= column sums of dy[m x n]; serial over rows inside each column.
template <typename T>
void bias_grad(const T* dy, T* db, int m, int n, bool accumulate);

// Serial reference implementations, kept for tests and the benchmark.
namespace serial {

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate);
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k,
             bool accumulate);
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate);
template <typename T>
void bmm(const T* x, const T* w, T* y, int batch, int k, int n,
         bool accumulate);
template <typename T>
void bmm_grad_x(const T* dy, const T* w, T* dx, int batch, int k, int n,
                bool accumulate);
template <typename T>
void bmm_grad_w(const T* x, const T* dy, T* dw, int batch, int k, int n,
                bool accumulate);
template <typename T>
void add_bias(const T* x, const T* bias, T* y, int m, int n);
template <typename T>
void bias_grad(const T* dy, T* db, int m, int n, bool accumulate);

}  // namespace serial

}  // namespace hnav::kernels
