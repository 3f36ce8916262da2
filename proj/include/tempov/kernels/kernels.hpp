#pragma once

#include <string_view>

namespace tempov::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

// Dense linear-algebra primitives used by every inner loop of the model.
// All matrices are row-major with explicit leading dimensions so that
// per-head column slices can be passed without copying.
template <typename T>
struct Table {
  Isa isa;
  // C[m×n] = (accumulate ? C : 0) + A[m×k] · B[n×k]ᵀ
  void (*gemm_nt)(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                  bool accumulate);
  // C[m×n] += A[m×k] · B[k×n]
  void (*gemm_nn)(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);
  // C[m×n] += A[k×m]ᵀ · B[k×n]
  void (*gemm_tn)(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);
  T (*dot)(const T* x, const T* y, int n);
  // y += alpha · x
  void (*axpy)(int n, T alpha, const T* x, T* y);
};

bool avx2_supported() noexcept;

// Kernel table for an explicit ISA. Requesting avx2 on a machine without it
// throws ConfigError.
template <typename T>
const Table<T>& table(Isa isa);

// The process-wide selection: avx2 when the CPU supports it, unless the
// TEMPOV_KERNELS=scalar environment variable or force_isa() says otherwise.
template <typename T>
const Table<T>& active();

Isa active_isa() noexcept;
void force_isa(Isa isa);

// RAII override used by the equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { force_isa(isa); }
  ~ScopedIsa() { force_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace tempov::kernels
