#include <cstdlib>
#include <stdexcept>
#include <string>

#include "velocorr/kernels.hpp"

namespace velocorr::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(VELOCORR_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa select_isa() {
  if (const char* forced = std::getenv("VELOCORR_KERNELS")) {
    if (std::string(forced) == "scalar") return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return cpu_has_avx2();
  }
  return false;
}

Isa active_isa() {
  static const Isa kIsa = select_isa();
  return kIsa;
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
  if (!isa_available(isa)) {
    throw std::runtime_error("kernel ISA not available: " +
                             std::string(isa_name(isa)));
  }
#if defined(VELOCORR_HAVE_AVX2)
  if (isa == Isa::kAvx2) return avx2::table<T>();
#endif
  return scalar::table<T>();
}

template <typename T>
const KernelTable<T>& active() {
  static const KernelTable<T>& kTable = table<T>(active_isa());
  return kTable;
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);
template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace velocorr::kernels
