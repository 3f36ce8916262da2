// AVX2/FMA variants of the reference kernels. This translation unit is the
// only one compiled with -mavx2 -mfma; it is entered through the dispatch
// table after a cpuid check.

#include <immintrin.h>

#include "tempov/kernels/kernels.hpp"

namespace tempov::kernels::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr int width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg bcast(float v) { return _mm256_set1_ps(v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr int width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg bcast(double v) { return _mm256_set1_pd(v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

template <typename T>
T dot_impl(const T* x, const T* y, int n) {
  using V = Vec<T>;
  constexpr int w = V::width;
  auto a0 = V::zero(), a1 = V::zero(), a2 = V::zero(), a3 = V::zero();
  int i = 0;
  for (; i + 4 * w <= n; i += 4 * w) {
    a0 = V::fma(V::load(x + i), V::load(y + i), a0);
    a1 = V::fma(V::load(x + i + w), V::load(y + i + w), a1);
    a2 = V::fma(V::load(x + i + 2 * w), V::load(y + i + 2 * w), a2);
    a3 = V::fma(V::load(x + i + 3 * w), V::load(y + i + 3 * w), a3);
  }
  for (; i + w <= n; i += w) a0 = V::fma(V::load(x + i), V::load(y + i), a0);
  T s = V::hsum(a0) + V::hsum(a1) + V::hsum(a2) + V::hsum(a3);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void axpy_impl(int n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr int w = V::width;
  const auto a = V::bcast(alpha);
  int i = 0;
  for (; i + w <= n; i += w) V::store(y + i, V::fma(a, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void gemm_nt_impl(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                  bool accumulate) {
  using V = Vec<T>;
  constexpr int w = V::width;
  const int kv = k / w * w;
  auto finish = [&](int i, int j, T s) {
    T* out = c + static_cast<long>(i) * ldc + j;
    *out = accumulate ? *out + s : s;
  };
  auto tail = [&](const T* x, const T* y) {
    T s = 0;
    for (int p = kv; p < k; ++p) s += x[p] * y[p];
    return s;
  };

  int i = 0;
  for (; i + 2 <= m; i += 2) {
    const T* a0 = a + static_cast<long>(i) * lda;
    const T* a1 = a0 + lda;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + static_cast<long>(j) * ldb;
      const T* b1 = b0 + ldb;
      const T* b2 = b1 + ldb;
      const T* b3 = b2 + ldb;
      auto c00 = V::zero(), c01 = V::zero(), c02 = V::zero(), c03 = V::zero();
      auto c10 = V::zero(), c11 = V::zero(), c12 = V::zero(), c13 = V::zero();
      for (int p = 0; p < kv; p += w) {
        const auto x0 = V::load(a0 + p);
        const auto x1 = V::load(a1 + p);
        auto y = V::load(b0 + p);
        c00 = V::fma(x0, y, c00);
        c10 = V::fma(x1, y, c10);
        y = V::load(b1 + p);
        c01 = V::fma(x0, y, c01);
        c11 = V::fma(x1, y, c11);
        y = V::load(b2 + p);
        c02 = V::fma(x0, y, c02);
        c12 = V::fma(x1, y, c12);
        y = V::load(b3 + p);
        c03 = V::fma(x0, y, c03);
        c13 = V::fma(x1, y, c13);
      }
      finish(i, j, V::hsum(c00) + tail(a0, b0));
      finish(i, j + 1, V::hsum(c01) + tail(a0, b1));
      finish(i, j + 2, V::hsum(c02) + tail(a0, b2));
      finish(i, j + 3, V::hsum(c03) + tail(a0, b3));
      finish(i + 1, j, V::hsum(c10) + tail(a1, b0));
      finish(i + 1, j + 1, V::hsum(c11) + tail(a1, b1));
      finish(i + 1, j + 2, V::hsum(c12) + tail(a1, b2));
      finish(i + 1, j + 3, V::hsum(c13) + tail(a1, b3));
    }
    for (; j < n; ++j) {
      const T* bj = b + static_cast<long>(j) * ldb;
      finish(i, j, dot_impl(a0, bj, k));
      finish(i + 1, j, dot_impl(a1, bj, k));
    }
  }
  for (; i < m; ++i) {
    const T* ai = a + static_cast<long>(i) * lda;
    for (int j = 0; j < n; ++j) finish(i, j, dot_impl(ai, b + static_cast<long>(j) * ldb, k));
  }
}

// Shared body of gemm_nn / gemm_tn: row i of C accumulates coef(i, p) · B[p, :].
template <typename T, typename Coef>
void gemm_rows(int m, int n, int k, Coef coef, const T* b, int ldb, T* c, int ldc) {
  using V = Vec<T>;
  constexpr int w = V::width;
  int i = 0;
  for (; i + 2 <= m; i += 2) {
    T* c0 = c + static_cast<long>(i) * ldc;
    T* c1 = c0 + ldc;
    int j = 0;
    for (; j + 3 * w <= n; j += 3 * w) {
      auto r00 = V::load(c0 + j), r01 = V::load(c0 + j + w), r02 = V::load(c0 + j + 2 * w);
      auto r10 = V::load(c1 + j), r11 = V::load(c1 + j + w), r12 = V::load(c1 + j + 2 * w);
      for (int p = 0; p < k; ++p) {
        const T* bp = b + static_cast<long>(p) * ldb + j;
        const auto s0 = V::bcast(coef(i, p));
        const auto s1 = V::bcast(coef(i + 1, p));
        auto y = V::load(bp);
        r00 = V::fma(s0, y, r00);
        r10 = V::fma(s1, y, r10);
        y = V::load(bp + w);
        r01 = V::fma(s0, y, r01);
        r11 = V::fma(s1, y, r11);
        y = V::load(bp + 2 * w);
        r02 = V::fma(s0, y, r02);
        r12 = V::fma(s1, y, r12);
      }
      V::store(c0 + j, r00);
      V::store(c0 + j + w, r01);
      V::store(c0 + j + 2 * w, r02);
      V::store(c1 + j, r10);
      V::store(c1 + j + w, r11);
      V::store(c1 + j + 2 * w, r12);
    }
    for (; j + w <= n; j += w) {
      auto r0 = V::load(c0 + j), r1 = V::load(c1 + j);
      for (int p = 0; p < k; ++p) {
        const auto y = V::load(b + static_cast<long>(p) * ldb + j);
        r0 = V::fma(V::bcast(coef(i, p)), y, r0);
        r1 = V::fma(V::bcast(coef(i + 1, p)), y, r1);
      }
      V::store(c0 + j, r0);
      V::store(c1 + j, r1);
    }
    for (; j < n; ++j) {
      T s0 = c0[j], s1 = c1[j];
      for (int p = 0; p < k; ++p) {
        const T y = b[static_cast<long>(p) * ldb + j];
        s0 += coef(i, p) * y;
        s1 += coef(i + 1, p) * y;
      }
      c0[j] = s0;
      c1[j] = s1;
    }
  }
  for (; i < m; ++i) {
    T* ci = c + static_cast<long>(i) * ldc;
    for (int p = 0; p < k; ++p) axpy_impl(n, coef(i, p), b + static_cast<long>(p) * ldb, ci);
  }
}

template <typename T>
void gemm_nn_impl(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  gemm_rows<T>(
      m, n, k, [a, lda](int i, int p) { return a[static_cast<long>(i) * lda + p]; }, b, ldb, c,
      ldc);
}

template <typename T>
void gemm_tn_impl(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  gemm_rows<T>(
      m, n, k, [a, lda](int i, int p) { return a[static_cast<long>(p) * lda + i]; }, b, ldb, c,
      ldc);
}

}  // namespace

template <typename T>
Table<T> make_table() {
  return Table<T>{Isa::avx2, &gemm_nt_impl<T>, &gemm_nn_impl<T>, &gemm_tn_impl<T>, &dot_impl<T>,
                  &axpy_impl<T>};
}

template Table<float> make_table<float>();
template Table<double> make_table<double>();

}  // namespace tempov::kernels::avx2
