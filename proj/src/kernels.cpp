#include "hnav/kernels.hpp"

#include <atomic>

namespace hnav::kernels {

namespace {
std::atomic<bool> g_parallel{true};
// Below this many output elements the pragma's if-clause keeps the loop
// serial; the loop body is identical either way.
constexpr std::size_t kParallelThreshold = 4096;
}  // namespace

void enable_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }
bool parallel_for(std::size_t work) {
  return g_parallel.load() && work >= kParallelThreshold;
}

namespace serial {

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k,
             bool accumulate) {
  // c[m x k] = a[m x n] * b^T, b stored [k x n]
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) {
      T acc = accumulate ? c[i * k + j] : T(0);
      for (int p = 0; p < n; ++p) acc += a[i * n + p] * b[j * n + p];
      c[i * k + j] = acc;
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate) {
  // c[k x n] = a^T * b, a stored [m x k], b stored [m x n]
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (int p = 0; p < m; ++p) acc += a[p * k + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void bmm(const T* x, const T* w, T* y, int batch, int k, int n,
         bool accumulate) {
  for (int b = 0; b < batch; ++b) {
    const T* xb = x + std::size_t(b) * k;
    const T* wb = w + std::size_t(b) * k * n;
    T* yb = y + std::size_t(b) * n;
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? yb[j] : T(0);
      for (int p = 0; p < k; ++p) acc += xb[p] * wb[p * n + j];
      yb[j] = acc;
    }
  }
}

template <typename T>
void bmm_grad_x(const T* dy, const T* w, T* dx, int batch, int k, int n,
                bool accumulate) {
  for (int b = 0; b < batch; ++b) {
    const T* dyb = dy + std::size_t(b) * n;
    const T* wb = w + std::size_t(b) * k * n;
    T* dxb = dx + std::size_t(b) * k;
    for (int p = 0; p < k; ++p) {
      T acc = accumulate ? dxb[p] : T(0);
      for (int j = 0; j < n; ++j) acc += dyb[j] * wb[p * n + j];
      dxb[p] = acc;
    }
  }
}

template <typename T>
void bmm_grad_w(const T* x, const T* dy, T* dw, int batch, int k, int n,
                bool accumulate) {
  for (int b = 0; b < batch; ++b) {
    const T* xb = x + std::size_t(b) * k;
    const T* dyb = dy + std::size_t(b) * n;
    T* dwb = dw + std::size_t(b) * k * n;
    for (int p = 0; p < k; ++p) {
      for (int j = 0; j < n; ++j) {
        T v = xb[p] * dyb[j];
        dwb[p * n + j] = accumulate ? dwb[p * n + j] + v : v;
      }
    }
  }
}

template <typename T>
void add_bias(const T* x, const T* bias, T* y, int m, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] + bias[j];
}

template <typename T>
void bias_grad(const T* dy, T* db, int m, int n, bool accumulate) {
  for (int j = 0; j < n; ++j) {
    T acc = accumulate ? db[j] : T(0);
    for (int i = 0; i < m; ++i) acc += dy[i * n + j];
    db[j] = acc;
  }
}

#define HNAV_INSTANTIATE_SERIAL(T)                                          \
  template void gemm<T>(const T*, const T*, T*, int, int, int, bool);       \
  template void gemm_nt<T>(const T*, const T*, T*, int, int, int, bool);    \
  template void gemm_tn<T>(const T*, const T*, T*, int, int, int, bool);    \
  template void bmm<T>(const T*, const T*, T*, int, int, int, bool);        \
  template void bmm_grad_x<T>(const T*, const T*, T*, int, int, int, bool); \
  template void bmm_grad_w<T>(const T*, const T*, T*, int, int, int, bool); \
  template void add_bias<T>(const T*, const T*, T*, int, int);              \
  template void bias_grad<T>(const T*, T*, int, int, bool);

HNAV_INSTANTIATE_SERIAL(float)
HNAV_INSTANTIATE_SERIAL(double)
#undef HNAV_INSTANTIATE_SERIAL

}  // namespace serial

// Parallel variants. Every loop below iterates over disjoint output elements
// (or disjoint rows of the output) and runs the same inner accumulation as
// the serial reference, so the arithmetic is identical.

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
  const bool par = parallel_for(std::size_t(m) * n * k);
#pragma omp parallel for if (par) schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k,
             bool accumulate) {
  const bool par = parallel_for(std::size_t(m) * n * k);
#pragma omp parallel for if (par) schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) {
      T acc = accumulate ? c[i * k + j] : T(0);
      for (int p = 0; p < n; ++p) acc += a[i * n + p] * b[j * n + p];
      c[i * k + j] = acc;
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate) {
  const bool par = parallel_for(std::size_t(m) * n * k);
#pragma omp parallel for if (par) schedule(static)
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (int p = 0; p < m; ++p) acc += a[p * k + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void bmm(const T* x, const T* w, T* y, int batch, int k, int n,
         bool accumulate) {
  const bool par = parallel_for(std::size_t(batch) * k * n);
#pragma omp parallel for if (par) schedule(static)
  for (int b = 0; b < batch; ++b) {
    const T* xb = x + std::size_t(b) * k;
    const T* wb = w + std::size_t(b) * k * n;
    T* yb = y + std::size_t(b) * n;
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? yb[j] : T(0);
      for (int p = 0; p < k; ++p) acc += xb[p] * wb[p * n + j];
      yb[j] = acc;
    }
  }
}

template <typename T>
void bmm_grad_x(const T* dy, const T* w, T* dx, int batch, int k, int n,
                bool accumulate) {
  const bool par = parallel_for(std::size_t(batch) * k * n);
#pragma omp parallel for if (par) schedule(static)
  for (int b = 0; b < batch; ++b) {
    const T* dyb = dy + std::size_t(b) * n;
    const T* wb = w + std::size_t(b) * k * n;
    T* dxb = dx + std::size_t(b) * k;
    for (int p = 0; p < k; ++p) {
      T acc = accumulate ? dxb[p] : T(0);
      for (int j = 0; j < n; ++j) acc += dyb[j] * wb[p * n + j];
      dxb[p] = acc;
    }
  }
}

template <typename T>
void bmm_grad_w(const T* x, const T* dy, T* dw, int batch, int k, int n,
                bool accumulate) {
  const bool par = parallel_for(std::size_t(batch) * k * n);
#pragma omp parallel for if (par) schedule(static)
  for (int b = 0; b < batch; ++b) {
    const T* xb = x + std::size_t(b) * k;
    const T* dyb = dy + std::size_t(b) * n;
    T* dwb = dw + std::size_t(b) * k * n;
    for (int p = 0; p < k; ++p) {
      for (int j = 0; j < n; ++j) {
        T v = xb[p] * dyb[j];
        dwb[p * n + j] = accumulate ? dwb[p * n + j] + v : v;
      }
    }
  }
}

template <typename T>
void add_bias(const T* x, const T* bias, T* y, int m, int n) {
  const bool par = parallel_for(std::size_t(m) * n);
#pragma omp parallel for if (par) schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] + bias[j];
}

template <typename T>
void bias_grad(const T* dy, T* db, int m, int n, bool accumulate) {
  const bool par = parallel_for(std::size_t(m) * n);
#pragma omp parallel for if (par) schedule(static)
  for (int j = 0; j < n; ++j) {
    T acc = accumulate ? db[j] : T(0);
    for (int i = 0; i < m; ++i) acc += dy[i * n + j];
    db[j] = acc;
  }
}

#define HNAV_INSTANTIATE(T)                                                 \
  template void gemm<T>(const T*, const T*, T*, int, int, int, bool);       \
  template void gemm_nt<T>(const T*, const T*, T*, int, int, int, bool);    \
  template void gemm_tn<T>(const T*, const T*, T*, int, int, int, bool);    \
  template void bmm<T>(const T*, const T*, T*, int, int, int, bool);        \
  template void bmm_grad_x<T>(const T*, const T*, T*, int, int, int, bool); \
  template void bmm_grad_w<T>(const T*, const T*, T*, int, int, int, bool); \
  template void add_bias<T>(const T*, const T*, T*, int, int);              \
  template void bias_grad<T>(const T*, T*, int, int, bool);

HNAV_INSTANTIATE(float)
HNAV_INSTANTIATE(double)
#undef HNAV_INSTANTIATE

}  // namespace hnav::kernels
