// AVX2 + FMA kernels. This translation unit is the only one compiled with
// -mavx2 -mfma; callers reach it through the dispatch table.

#include <immintrin.h>

#include <array>
#include <cmath>
#include <type_traits>

#include "velocorr/kernels.hpp"

namespace velocorr::kernels::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr std::size_t kLanes = 8;
  static type zero() { return _mm256_setzero_ps(); }
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type broadcast(float v) { return _mm256_set1_ps(v); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static type add(type a, type b) { return _mm256_add_ps(a, b); }
  static float hsum(type v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr std::size_t kLanes = 4;
  static type zero() { return _mm256_setzero_pd(); }
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type broadcast(double v) { return _mm256_set1_pd(v); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static type add(type a, type b) { return _mm256_add_pd(a, b); }
  static double hsum(type v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  auto acc0 = V::zero(), acc1 = V::zero(), acc2 = V::zero(), acc3 = V::zero();
  std::size_t i = 0;
  for (; i + 4 * L <= n; i += 4 * L) {
    acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
    acc1 = V::fmadd(V::load(a + i + L), V::load(b + i + L), acc1);
    acc2 = V::fmadd(V::load(a + i + 2 * L), V::load(b + i + 2 * L), acc2);
    acc3 = V::fmadd(V::load(a + i + 3 * L), V::load(b + i + 3 * L), acc3);
  }
  for (; i + L <= n; i += L) {
    acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
  }
  T acc = V::hsum(V::add(V::add(acc0, acc1), V::add(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  const auto va = V::broadcast(alpha);
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
    V::store(y + i + L, V::fmadd(va, V::load(x + i + L), V::load(y + i + L)));
  }
  for (; i + L <= n; i += L) {
    V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four nonzero rows at a time so each chunk of y is loaded and stored once
// per group instead of once per row.
template <typename T>
void gemv_t(const T* x, const T* m, std::size_t rows, std::size_t cols, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  std::array<std::size_t, 4> group{};
  std::size_t filled = 0;

  auto flush4 = [&] {
    const T* r0 = m + group[0] * cols;
    const T* r1 = m + group[1] * cols;
    const T* r2 = m + group[2] * cols;
    const T* r3 = m + group[3] * cols;
    const auto a0 = V::broadcast(x[group[0]]);
    const auto a1 = V::broadcast(x[group[1]]);
    const auto a2 = V::broadcast(x[group[2]]);
    const auto a3 = V::broadcast(x[group[3]]);
    std::size_t c = 0;
    for (; c + L <= cols; c += L) {
      auto acc = V::load(y + c);
      acc = V::fmadd(a0, V::load(r0 + c), acc);
      acc = V::fmadd(a1, V::load(r1 + c), acc);
      acc = V::fmadd(a2, V::load(r2 + c), acc);
      acc = V::fmadd(a3, V::load(r3 + c), acc);
      V::store(y + c, acc);
    }
    for (; c < cols; ++c) {
      y[c] += x[group[0]] * r0[c] + x[group[1]] * r1[c] + x[group[2]] * r2[c] +
              x[group[3]] * r3[c];
    }
  };

  for (std::size_t r = 0; r < rows; ++r) {
    if (x[r] == T(0)) continue;
    group[filled++] = r;
    if (filled == 4) {
      flush4();
      filled = 0;
    }
  }
  for (std::size_t k = 0; k < filled; ++k) {
    axpy(x[group[k]], m + group[k] * cols, y, cols);
  }
}

template <typename T>
void gemv(const T* m, std::size_t rows, std::size_t cols, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const T* r0 = m + r * cols;
    const T* r1 = r0 + cols;
    const T* r2 = r1 + cols;
    const T* r3 = r2 + cols;
    auto s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
    std::size_t c = 0;
    for (; c + L <= cols; c += L) {
      const auto xv = V::load(x + c);
      s0 = V::fmadd(V::load(r0 + c), xv, s0);
      s1 = V::fmadd(V::load(r1 + c), xv, s1);
      s2 = V::fmadd(V::load(r2 + c), xv, s2);
      s3 = V::fmadd(V::load(r3 + c), xv, s3);
    }
    T t0 = V::hsum(s0), t1 = V::hsum(s1), t2 = V::hsum(s2), t3 = V::hsum(s3);
    for (; c < cols; ++c) {
      t0 += r0[c] * x[c];
      t1 += r1[c] * x[c];
      t2 += r2[c] * x[c];
      t3 += r3[c] * x[c];
    }
    y[r] += t0;
    y[r + 1] += t1;
    y[r + 2] += t2;
    y[r + 3] += t3;
  }
  for (; r < rows; ++r) y[r] += dot(m + r * cols, x, cols);
}

// Cephes-style single-precision exp: range reduction by ln 2 and a degree-5
// polynomial, relative error around 2 ulp over the clamped range.
inline __m256 exp_ps(__m256 x) {
  const __m256 one = _mm256_set1_ps(1.0f);
  x = _mm256_min_ps(x, _mm256_set1_ps(88.3762626647949f));
  x = _mm256_max_ps(x, _mm256_set1_ps(-88.3762626647949f));
  __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f),
                              _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  const __m256 z = _mm256_mul_ps(x, x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, z, x);
  y = _mm256_add_ps(y, one);
  __m256i n = _mm256_cvttps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(127));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

inline __m256 sigmoid_ps(__m256 x) {
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 e = exp_ps(_mm256_sub_ps(_mm256_setzero_ps(), x));
  return _mm256_div_ps(one, _mm256_add_ps(one, e));
}

template <typename T>
void sigmoid(T* x, std::size_t n) {
  std::size_t i = 0;
  if constexpr (std::is_same_v<T, float>) {
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, sigmoid_ps(_mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      x[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      x[i] = e / (T(1) + e);
    }
  }
}

// tanh(x) = 2 sigmoid(2x) - 1
template <typename T>
void tanh(T* x, std::size_t n) {
  std::size_t i = 0;
  if constexpr (std::is_same_v<T, float>) {
    const __m256 two = _mm256_set1_ps(2.0f);
    const __m256 one = _mm256_set1_ps(1.0f);
    for (; i + 8 <= n; i += 8) {
      const __m256 s = sigmoid_ps(_mm256_mul_ps(two, _mm256_loadu_ps(x + i)));
      _mm256_storeu_ps(x + i, _mm256_fmsub_ps(two, s, one));
    }
  }
  for (; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  static const KernelTable<T> kTable{Isa::kAvx2, &dot<T>,     &axpy<T>,
                                     &gemv_t<T>, &gemv<T>,    &sigmoid<T>,
                                     &tanh<T>};
  return kTable;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace velocorr::kernels::avx2
