#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "doctest.h"
#include "velocorr/kernels.hpp"

using namespace velocorr::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<T> v(n);
  for (auto& x : v) x = T(d(rng));
  return v;
}

// Tolerance for reassociated sums of n terms with magnitudes up to ~4.
template <typename T>
double sum_tol(std::size_t n) {
  const double eps = std::is_same_v<T, float> ? 1.2e-7 : 2.3e-16;
  return 8.0 * eps * double(n + 1) * 4.0;
}

template <typename T>
void compare_tables(const KernelTable<T>& ref, const KernelTable<T>& simd) {
  std::mt19937_64 rng(7);
  for (std::size_t n : {0, 1, 3, 7, 8, 9, 15, 16, 17, 31, 64, 100, 257}) {
    auto a = random_vec<T>(n, rng);
    auto b = random_vec<T>(n, rng);
    CHECK(std::abs(double(ref.dot(a.data(), b.data(), n)) - double(simd.dot(a.data(), b.data(), n))) <=
          sum_tol<T>(n));

    auto y1 = random_vec<T>(n, rng);
    auto y2 = y1;
    ref.axpy(T(0.75), a.data(), y1.data(), n);
    simd.axpy(T(0.75), a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(double(y1[i] - y2[i])) <= sum_tol<T>(1));

    auto s1 = random_vec<T>(n, rng, -30.0, 30.0);
    auto s2 = s1;
    auto t1 = s1;
    auto t2 = s1;
    ref.sigmoid(s1.data(), n);
    simd.sigmoid(s2.data(), n);
    ref.tanh(t1.data(), n);
    simd.tanh(t2.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(double(s1[i] - s2[i])) <= 4e-7);
      CHECK(std::abs(double(t1[i] - t2[i])) <= 8e-7);
      CHECK(s2[i] >= T(0));
      CHECK(s2[i] <= T(1));
    }
  }
  for (std::size_t rows : {1, 2, 3, 4, 5, 9, 33}) {
    for (std::size_t cols : {1, 7, 8, 13, 64, 100}) {
      auto m = random_vec<T>(rows * cols, rng);
      auto x = random_vec<T>(rows, rng);
      x[0] = T(0);  // exercises the zero-row skip
      auto y1 = random_vec<T>(cols, rng);
      auto y2 = y1;
      ref.gemv_t(x.data(), m.data(), rows, cols, y1.data());
      simd.gemv_t(x.data(), m.data(), rows, cols, y2.data());
      for (std::size_t c = 0; c < cols; ++c) CHECK(std::abs(double(y1[c] - y2[c])) <= sum_tol<T>(rows));

      auto xc = random_vec<T>(cols, rng);
      auto z1 = random_vec<T>(rows, rng);
      auto z2 = z1;
      ref.gemv(m.data(), rows, cols, xc.data(), z1.data());
      simd.gemv(m.data(), rows, cols, xc.data(), z2.data());
      for (std::size_t r = 0; r < rows; ++r) CHECK(std::abs(double(z1[r] - z2[r])) <= sum_tol<T>(cols));
    }
  }
}

}  // namespace

TEST_CASE("scalar kernels match loop definitions") {
  const auto& k = scalar::table<double>();
  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(k.dot(a.data(), b.data(), 3) == 32.0);
  std::vector<double> m{1, 2, 3, 4, 5, 6};  // 2 x 3
  std::vector<double> y(3, 0.0);
  std::vector<double> x{1, 10};
  k.gemv_t(x.data(), m.data(), 2, 3, y.data());
  CHECK(y == std::vector<double>{41, 52, 63});
  std::vector<double> z(2, 1.0);
  k.gemv(m.data(), 2, 3, a.data(), z.data());
  CHECK(z == std::vector<double>{15, 33});
  std::vector<double> s{0.0, 1000.0, -1000.0};
  k.sigmoid(s.data(), 3);
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 1.0);
  CHECK(s[2] >= 0.0);
  CHECK(s[2] < 1e-300);
}

TEST_CASE("SIMD kernels agree with the scalar reference") {
  if (!isa_available(Isa::kAvx2)) {
    MESSAGE("AVX2 not available; equivalence not exercised on this machine");
    return;
  }
  compare_tables(table<float>(Isa::kScalar), table<float>(Isa::kAvx2));
  compare_tables(table<double>(Isa::kScalar), table<double>(Isa::kAvx2));
}

TEST_CASE("dispatch honours the environment override") {
  const char* env = std::getenv("VELOCORR_KERNELS");
  if (env && std::string_view(env) == "scalar") {
    CHECK(active_isa() == Isa::kScalar);
  } else {
    CHECK(active_isa() == (isa_available(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar));
  }
  CHECK(active<float>().isa == active_isa());
  CHECK(isa_name(Isa::kScalar) == "scalar");
}
