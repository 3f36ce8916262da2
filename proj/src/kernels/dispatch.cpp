#include <atomic>
#include <cstdlib>
#include <cstring>

#include "tempov/core/error.hpp"
#include "tempov/kernels/kernels.hpp"
#include "tempov/kernels/ref.hpp"

namespace tempov::kernels {

#if defined(TEMPOV_HAVE_AVX2)
namespace avx2 {
template <typename T>
Table<T> make_table();
}
#endif

namespace {

template <typename T>
Table<T> scalar_table() {
  return Table<T>{Isa::scalar, &ref::gemm_nt<T>, &ref::gemm_nn<T>, &ref::gemm_tn<T>, &ref::dot<T>,
                  &ref::axpy<T>};
}

Isa initial_isa() {
  if (const char* env = std::getenv("TEMPOV_KERNELS"); env && std::strcmp(env, "scalar") == 0) {
    return Isa::scalar;
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool avx2_supported() noexcept {
#if defined(TEMPOV_HAVE_AVX2)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

template <typename T>
const Table<T>& table(Isa isa) {
  static const Table<T> scalar = scalar_table<T>();
  if (isa == Isa::scalar) return scalar;
#if defined(TEMPOV_HAVE_AVX2)
  if (avx2_supported()) {
    static const Table<T> simd = avx2::make_table<T>();
    return simd;
  }
#endif
  throw ConfigError("avx2 kernels requested but not supported on this machine");
}

template <typename T>
const Table<T>& active() {
  return table<T>(selected().load(std::memory_order_relaxed));
}

Isa active_isa() noexcept { return selected().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported()) {
    throw ConfigError("avx2 kernels requested but not supported on this machine");
  }
  selected().store(isa, std::memory_order_relaxed);
}

template const Table<float>& table<float>(Isa);
template const Table<double>& table<double>(Isa);
template const Table<float>& active<float>();
template const Table<double>& active<double>();

}  // namespace tempov::kernels
