#include <doctest.h>

#include <cmath>
#include <vector>

#include "tempov/core/rng.hpp"
#include "tempov/kernels/kernels.hpp"

using namespace tempov;
using kernels::Isa;

namespace {

template <typename T>
std::vector<T> randv(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(normal(rng));
  return v;
}

template <typename T>
double max_rel(const std::vector<T>& a, const std::vector<T>& b) {
  double w = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    w = std::max(w, std::fabs(double(a[i]) - double(b[i])) / std::max(1.0, std::fabs(double(a[i]))));
  return w;
}

template <typename T>
void compare_isas(double tol) {
  if (!kernels::avx2_supported()) {
    MESSAGE("no AVX2 on this machine; only the scalar path exists");
    return;
  }
  const auto& s = kernels::table<T>(Isa::scalar);
  const auto& v = kernels::table<T>(Isa::avx2);
  Rng rng = make_rng(11);
  // Odd sizes hit every tail path.
  for (int m : {1, 3, 8, 17}) {
    for (int n : {1, 5, 16, 33}) {
      for (int k : {1, 7, 8, 31, 64}) {
        CAPTURE(m);
        CAPTURE(n);
        CAPTURE(k);
        const int lda = k + 2, ldb = k + 1, ldc = n + 3;
        auto a = randv<T>(std::size_t(m) * lda, rng);
        auto b = randv<T>(std::size_t(n) * ldb, rng);
        auto c0 = randv<T>(std::size_t(m) * ldc, rng);
        auto c1 = c0;
        s.gemm_nt(m, n, k, a.data(), lda, b.data(), ldb, c0.data(), ldc, true);
        v.gemm_nt(m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc, true);
        CHECK(max_rel(c0, c1) < tol);

        auto bn = randv<T>(std::size_t(k) * (n + 1), rng);
        auto d0 = randv<T>(std::size_t(m) * ldc, rng);
        auto d1 = d0;
        s.gemm_nn(m, n, k, a.data(), lda, bn.data(), n + 1, d0.data(), ldc);
        v.gemm_nn(m, n, k, a.data(), lda, bn.data(), n + 1, d1.data(), ldc);
        CHECK(max_rel(d0, d1) < tol);

        auto at = randv<T>(std::size_t(k) * (m + 2), rng);
        auto e0 = randv<T>(std::size_t(m) * ldc, rng);
        auto e1 = e0;
        s.gemm_tn(m, n, k, at.data(), m + 2, bn.data(), n + 1, e0.data(), ldc);
        v.gemm_tn(m, n, k, at.data(), m + 2, bn.data(), n + 1, e1.data(), ldc);
        CHECK(max_rel(e0, e1) < tol);
      }
    }
  }
  for (int n : {0, 1, 7, 8, 9, 63, 1000}) {
    auto x = randv<T>(n, rng), y = randv<T>(n, rng);
    CHECK(std::fabs(double(s.dot(x.data(), y.data(), n)) - double(v.dot(x.data(), y.data(), n))) <
          tol * std::max(1.0, std::sqrt(double(n))));
    auto y1 = y;
    s.axpy(n, T(0.37), x.data(), y.data());
    v.axpy(n, T(0.37), x.data(), y1.data());
    CHECK(max_rel(y, y1) < tol);
  }
}

}  // namespace

TEST_CASE("avx2 kernels agree with the scalar reference (float)") { compare_isas<float>(1e-5); }
TEST_CASE("avx2 kernels agree with the scalar reference (double)") { compare_isas<double>(1e-12); }

TEST_CASE("gemm_nt without accumulate overwrites") {
  const auto& s = kernels::table<double>(Isa::scalar);
  std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4, 99.0);
  s.gemm_nt(2, 2, 2, a.data(), 2, b.data(), 2, c.data(), 2, false);
  CHECK(c == std::vector<double>{17, 23, 39, 53});
}

TEST_CASE("scoped isa restores the previous selection") {
  const Isa before = kernels::active_isa();
  {
    kernels::ScopedIsa guard(Isa::scalar);
    CHECK(kernels::active_isa() == Isa::scalar);
    CHECK(kernels::active<float>().isa == Isa::scalar);
  }
  CHECK(kernels::active_isa() == before);
}
