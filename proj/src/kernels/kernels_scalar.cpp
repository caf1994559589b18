#include <cmath>

#include "velocorr/kernels.hpp"

namespace velocorr::kernels::scalar {
namespace {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void gemv_t(const T* x, const T* m, std::size_t rows, std::size_t cols, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T xr = x[r];
    if (xr == T(0)) continue;
    const T* row = m + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * row[c];
  }
}

template <typename T>
void gemv(const T* m, std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(m + r * cols, x, cols);
}

template <typename T>
void sigmoid(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      x[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      x[i] = e / (T(1) + e);
    }
  }
}

template <typename T>
void tanh(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  static const KernelTable<T> kTable{Isa::kScalar, &dot<T>, &axpy<T>,
                                     &gemv_t<T>, &gemv<T>, &sigmoid<T>,
                                     &tanh<T>};
  return kTable;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace velocorr::kernels::scalar
