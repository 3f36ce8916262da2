#pragma once

// Scalar reference kernels. These define the semantics the SIMD variants are
// tested against; keep them as plain loops.

namespace tempov::kernels::ref {

template <typename T>
T dot(const T* x, const T* y, int n) {
  T s = 0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void axpy(int n, T alpha, const T* x, T* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T s = dot(a + static_cast<long>(i) * lda, b + static_cast<long>(j) * ldb, k);
      T* out = c + static_cast<long>(i) * ldc + j;
      *out = accumulate ? *out + s : s;
    }
  }
}

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<long>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      axpy(n, a[static_cast<long>(i) * lda + p], b + static_cast<long>(p) * ldb, crow);
    }
  }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<long>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      axpy(n, a[static_cast<long>(p) * lda + i], b + static_cast<long>(p) * ldb, crow);
    }
  }
}

}  // namespace tempov::kernels::ref
