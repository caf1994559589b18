#pragma once

// Hand-written layers with exact backward passes, the onset-masked binary
// cross-entropy, and Adam with a step-decay learning-rate schedule.
//
// Layers cache what their backward pass needs during forward(). A backward()
// consumes the cache; calling it again without a fresh forward() throws
// CacheError. Parameter gradients accumulate (+=) so a batch is processed as
// a sequence of forward/backward pairs followed by one optimizer step.
//
// Everything is templated on the scalar type: float for training, double for
// finite-difference gradient checks.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "velocorr/tensor.hpp"

namespace velocorr::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Param {
  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  std::string name;
  Tensor2<T> value;
  Tensor2<T> grad;
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
void zero_grads(const ParamList<T>& params);

/// Fully connected layer, y = x W + b with W stored in x out layout.
template <typename T>
class Linear {
 public:
  Linear(std::string name, std::size_t in, std::size_t out);

  std::size_t in_features() const { return weight_.value.rows(); }
  std::size_t out_features() const { return weight_.value.cols(); }

  /// Uniform in +-1/sqrt(in) for the weight, zero bias.
  void init_uniform(std::mt19937_64& rng);

  Tensor2<T> forward(const Tensor2<T>& x);
  /// Returns dL/dx when `input_grad` is set, otherwise an empty tensor.
  Tensor2<T> backward(const Tensor2<T>& dy, bool input_grad = true);

  void collect(ParamList<T>& out);
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  std::string name_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor2<T> x_;
  bool cached_ = false;
};

template <typename T>
class Sigmoid {
 public:
  Tensor2<T> forward(const Tensor2<T>& x);
  Tensor2<T> backward(const Tensor2<T>& dy);

 private:
  Tensor2<T> y_;
  bool cached_ = false;
};

template <typename T>
T sigmoid(T x);

template <typename T>
class Relu {
 public:
  Tensor3<T> forward(const Tensor3<T>& x);
  Tensor3<T> backward(const Tensor3<T>& dy);

 private:
  Tensor3<T> y_;
  bool cached_ = false;
};

/// Average pooling over pairs of adjacent width (frequency) bins; an odd last
/// bin is dropped.
template <typename T>
class AvgPoolWidth2 {
 public:
  Tensor3<T> forward(const Tensor3<T>& x);
  Tensor3<T> backward(const Tensor3<T>& dy);

 private:
  std::size_t in_width_ = 0;
  bool cached_ = false;
};

/// 2-D convolution over (time, frequency) with stride 1 and zero "same"
/// padding. Weight layout: out_channels x (in_channels * k * k).
template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel);

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  std::size_t kernel() const { return kernel_; }

  void init_uniform(std::mt19937_64& rng);

  Tensor3<T> forward(const Tensor3<T>& x);
  Tensor3<T> backward(const Tensor3<T>& dy, bool input_grad = true);

  void collect(ParamList<T>& out);
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  std::string name_;
  std::size_t in_channels_;
  std::size_t out_channels_;
  std::size_t kernel_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor3<T> x_;
  bool cached_ = false;
};

/// Bidirectional single-layer LSTM. Input is a T x input sequence; output is
/// T x (2 * hidden), forward-direction state first. Gate order within the
/// 4 * hidden pre-activation is input, forget, cell, output.
template <typename T>
class BiLstm {
 public:
  BiLstm(std::string name, std::size_t input, std::size_t hidden);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }

  /// Weights uniform in +-1/sqrt(fan_in), forget-gate bias 1, other biases 0.
  void init_uniform(std::mt19937_64& rng);

  Tensor2<T> forward(const Tensor2<T>& x);
  Tensor2<T> backward(const Tensor2<T>& dy, bool input_grad = true);

  void collect(ParamList<T>& out);

  struct Direction {
    Param<T> w_ih;  // input x 4H
    Param<T> w_hh;  // H x 4H
    Param<T> bias;  // 1 x 4H
    bool reverse = false;
    Tensor2<T> gates;   // post-activation, T x 4H
    Tensor2<T> cell;    // T x H
    Tensor2<T> hidden;  // T x H
    Tensor2<T> tanh_cell;
  };
  Direction& direction(bool reverse) { return reverse ? bwd_ : fwd_; }

 private:
  void forward_direction(Direction& d, const Tensor2<T>& x, Tensor2<T>& out,
                         std::size_t col_offset);
  void backward_direction(Direction& d, const Tensor2<T>& dy,
                          std::size_t col_offset, Tensor2<T>* dx);

  std::string name_;
  std::size_t input_;
  std::size_t hidden_;
  Direction fwd_;
  Direction bwd_;
  Tensor2<T> x_;
  bool cached_ = false;
};

enum class Reduction { kSum, kMeanOverMask };

template <typename T>
struct LossResult {
  T loss = 0;
  Tensor2<T> grad;
  std::size_t mask_count = 0;
  /// Set when the mask is empty under kMeanOverMask (loss is defined as 0).
  bool empty_mask = false;
};

inline constexpr double kBceClamp = 1e-7;

/// Binary cross-entropy summed over mask = 1 cells. Predictions are clamped to
/// [1e-7, 1 - 1e-7] before the logs; the gradient is evaluated at the clamped
/// value and is exactly zero wherever mask = 0.
template <typename T>
LossResult<T> masked_bce(const Tensor2<T>& pred, const Tensor2<T>& target,
                         const Tensor2<std::uint8_t>& mask,
                         Reduction reduction = Reduction::kSum);

struct AdamConfig {
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_rate = 0.9;
  std::uint64_t decay_steps = 10000;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip_norm = 0.0;
  /// L2 penalty folded into the gradient; 0 disables.
  double weight_decay = 0.0;
};

/// base_lr * decay_rate^floor(step / decay_steps), where `step` counts the
/// updates already applied.
double scheduled_lr(const AdamConfig& cfg, std::uint64_t step);

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor2<T>> m;
  std::vector<Tensor2<T>> v;
};

/// One Adam update with bias correction. Throws NonFiniteError naming the
/// parameter before touching anything if a gradient is NaN or infinite.
template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state,
               const AdamConfig& cfg);

}  // namespace velocorr::nn
