#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace velocorr {

/// Row-major 2-D array with value semantics.
template <typename T>
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor2&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor2<To> tensor_cast(const Tensor2<From>& src) {
  Tensor2<To> out(src.rows(), src.cols());
  std::transform(src.flat().begin(), src.flat().end(), out.flat().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

/// Rows [start, start + count) of `src`; rows past the end are zero.
template <typename T>
Tensor2<T> slice_rows(const Tensor2<T>& src, std::size_t start,
                      std::size_t count) {
  Tensor2<T> out(count, src.cols());
  for (std::size_t r = 0; r < count && start + r < src.rows(); ++r) {
    std::copy_n(src.row(start + r).begin(), src.cols(), out.row(r).begin());
  }
  return out;
}

/// Channel-major 3-D array (channels x height x width), used for conv
/// feature maps where height is time and width is frequency.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width,
          T fill = T{})
      : channels_(channels),
        height_(height),
        width_(width),
        data_(channels * height * width, fill) {}

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * height_ + h) * width_ + w];
  }
  const T& operator()(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * height_ + h) * width_ + w];
  }
  T* line(std::size_t c, std::size_t h) {
    return data_.data() + (c * height_ + h) * width_;
  }
  const T* line(std::size_t c, std::size_t h) const {
    return data_.data() + (c * height_ + h) * width_;
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

}  // namespace velocorr
