#pragma once

// Dense inner-loop kernels used by the nn layers and the mel projection.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The variant is picked once at first use from the CPU's
// capabilities; setting VELOCORR_KERNELS=scalar in the environment forces the
// reference path. Variants agree up to floating-point summation order.

#include <cstddef>
#include <string_view>

namespace velocorr::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

template <typename T>
struct KernelTable {
  Isa isa;
  /// sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  /// y[c] += sum_r x[r] * m[r * cols + c]. Rows with x[r] == 0 are skipped,
  /// which makes sparse piano-roll inputs cheap.
  void (*gemv_t)(const T* x, const T* m, std::size_t rows, std::size_t cols,
                 T* y);
  /// y[r] += sum_c m[r * cols + c] * x[c]
  void (*gemv)(const T* m, std::size_t rows, std::size_t cols, const T* x,
               T* y);
  /// x[i] = 1 / (1 + exp(-x[i])), in place
  void (*sigmoid)(T* x, std::size_t n);
  /// x[i] = tanh(x[i]), in place
  void (*tanh)(T* x, std::size_t n);
};

bool isa_available(Isa isa);

/// Kernel table for a specific ISA. Throws std::runtime_error if the ISA is
/// not available on this machine or in this build.
template <typename T>
const KernelTable<T>& table(Isa isa);

/// The table selected for this process (see the file comment).
template <typename T>
const KernelTable<T>& active();

Isa active_isa();

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}  // namespace scalar

#if defined(VELOCORR_HAVE_AVX2)
namespace avx2 {
template <typename T>
const KernelTable<T>& table();
}  // namespace avx2
#endif

}  // namespace velocorr::kernels
