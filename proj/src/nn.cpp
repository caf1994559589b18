#include "velocorr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "velocorr/kernels.hpp"

namespace velocorr::nn {
namespace {

template <typename T>
const kernels::KernelTable<T>& K() {
  return kernels::active<T>();
}

std::string shape_message(const std::string& layer, const std::string& what,
                          std::size_t expected, std::size_t actual) {
  std::ostringstream os;
  os << layer << ": " << what << " expected " << expected << ", got " << actual;
  return os.str();
}

void require_cache(bool cached, const std::string& layer) {
  if (!cached) {
    throw CacheError(layer +
                     ": backward() without a matching forward() (missing or "
                     "stale cache)");
  }
}

template <typename T>
void fill_uniform(Tensor2<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.flat()) v = static_cast<T>(dist(rng));
}

template <typename T>
void check_finite(const Tensor2<T>& t, const char* what) {
#ifndef NDEBUG
  for (T v : t.flat()) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + ": non-finite value");
  }
#else
  (void)t;
  (void)what;
#endif
}

template <typename T>
Tensor2<T> transpose(const Tensor2<T>& a, std::size_t row_lo, std::size_t row_hi) {
  Tensor2<T> out(a.cols(), row_hi - row_lo);
  for (std::size_t r = row_lo; r < row_hi; ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r - row_lo) = a(r, c);
  }
  return out;
}

}  // namespace

template <typename T>
T sigmoid(T x) {
  if (x >= 0) {
    return T(1) / (T(1) + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->grad.fill(T(0));
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in, std::size_t out)
    : name_(std::move(name)),
      weight_(name_ + ".weight", in, out),
      bias_(name_ + ".bias", 1, out) {}

template <typename T>
void Linear<T>::init_uniform(std::mt19937_64& rng) {
  fill_uniform(weight_.value, 1.0 / std::sqrt(double(in_features())), rng);
  bias_.value.fill(T(0));
}

template <typename T>
Tensor2<T> Linear<T>::forward(const Tensor2<T>& x) {
  if (x.cols() != in_features()) {
    throw ShapeError(shape_message(name_, "input width", in_features(), x.cols()));
  }
  const auto& k = K<T>();
  const std::size_t out = out_features();
  Tensor2<T> y(x.rows(), out);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    std::copy_n(bias_.value.data(), out, y.row(t).data());
    k.gemv_t(x.row(t).data(), weight_.value.data(), in_features(), out,
             y.row(t).data());
  }
  x_ = x;
  cached_ = true;
  return y;
}

template <typename T>
Tensor2<T> Linear<T>::backward(const Tensor2<T>& dy, bool input_grad) {
  require_cache(cached_, name_);
  if (dy.rows() != x_.rows() || dy.cols() != out_features()) {
    throw ShapeError(shape_message(name_, "upstream gradient width", out_features(),
                                   dy.cols()));
  }
  cached_ = false;
  const auto& k = K<T>();
  const std::size_t in = in_features();
  const std::size_t out = out_features();
  Tensor2<T> dx;
  if (input_grad) dx = Tensor2<T>(x_.rows(), in);
  for (std::size_t t = 0; t < dy.rows(); ++t) {
    const T* g = dy.row(t).data();
    if (std::all_of(g, g + out, [](T v) { return v == T(0); })) continue;
    k.axpy(T(1), g, bias_.grad.data(), out);
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = x_(t, i);
      if (xi != T(0)) k.axpy(xi, g, weight_.grad.row(i).data(), out);
    }
    if (input_grad) k.gemv(weight_.value.data(), in, out, g, dx.row(t).data());
  }
  return dx;
}

template <typename T>
void Linear<T>::collect(ParamList<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Sigmoid

template <typename T>
Tensor2<T> Sigmoid<T>::forward(const Tensor2<T>& x) {
  Tensor2<T> y(x.rows(), x.cols());
  std::transform(x.flat().begin(), x.flat().end(), y.flat().begin(),
                 [](T v) { return sigmoid(v); });
  y_ = y;
  cached_ = true;
  return y;
}

template <typename T>
Tensor2<T> Sigmoid<T>::backward(const Tensor2<T>& dy) {
  require_cache(cached_, "sigmoid");
  if (dy.rows() != y_.rows() || dy.cols() != y_.cols()) {
    throw ShapeError(shape_message("sigmoid", "gradient size", y_.size(), dy.size()));
  }
  cached_ = false;
  Tensor2<T> dx(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const T s = y_.flat()[i];
    dx.flat()[i] = dy.flat()[i] * s * (T(1) - s);
  }
  return dx;
}

// ---------------------------------------------------------------- Relu

template <typename T>
Tensor3<T> Relu<T>::forward(const Tensor3<T>& x) {
  Tensor3<T> y = x;
  for (auto& v : y.flat()) v = v > T(0) ? v : T(0);
  y_ = y;
  cached_ = true;
  return y;
}

template <typename T>
Tensor3<T> Relu<T>::backward(const Tensor3<T>& dy) {
  require_cache(cached_, "relu");
  cached_ = false;
  Tensor3<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y_.flat()[i] > T(0))) dx.flat()[i] = T(0);
  }
  return dx;
}

// ---------------------------------------------------------------- AvgPool

template <typename T>
Tensor3<T> AvgPoolWidth2<T>::forward(const Tensor3<T>& x) {
  const std::size_t w = x.width() / 2;
  Tensor3<T> y(x.channels(), x.height(), w);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t h = 0; h < x.height(); ++h) {
      const T* in = x.line(c, h);
      T* out = y.line(c, h);
      for (std::size_t i = 0; i < w; ++i) out[i] = T(0.5) * (in[2 * i] + in[2 * i + 1]);
    }
  }
  in_width_ = x.width();
  cached_ = true;
  return y;
}

template <typename T>
Tensor3<T> AvgPoolWidth2<T>::backward(const Tensor3<T>& dy) {
  require_cache(cached_, "avgpool");
  cached_ = false;
  Tensor3<T> dx(dy.channels(), dy.height(), in_width_);
  for (std::size_t c = 0; c < dy.channels(); ++c) {
    for (std::size_t h = 0; h < dy.height(); ++h) {
      const T* g = dy.line(c, h);
      T* out = dx.line(c, h);
      for (std::size_t i = 0; i < dy.width(); ++i) {
        out[2 * i] = T(0.5) * g[i];
        out[2 * i + 1] = T(0.5) * g[i];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel)
    : name_(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      weight_(name_ + ".weight", out_channels, in_channels * kernel * kernel),
      bias_(name_ + ".bias", 1, out_channels) {
  if (kernel % 2 == 0) throw ShapeError(name_ + ": kernel size must be odd");
}

template <typename T>
void Conv2d<T>::init_uniform(std::mt19937_64& rng) {
  const double fan_in = double(in_channels_ * kernel_ * kernel_);
  fill_uniform(weight_.value, 1.0 / std::sqrt(fan_in), rng);
  bias_.value.fill(T(0));
}

template <typename T>
Tensor3<T> Conv2d<T>::forward(const Tensor3<T>& x) {
  if (x.channels() != in_channels_) {
    throw ShapeError(shape_message(name_, "input channels", in_channels_, x.channels()));
  }
  const auto& k = K<T>();
  const std::size_t H = x.height();
  const std::size_t W = x.width();
  const long pad = long(kernel_ / 2);
  Tensor3<T> y(out_channels_, H, W);
  for (std::size_t o = 0; o < out_channels_; ++o) {
    for (std::size_t h = 0; h < H; ++h) {
      std::fill_n(y.line(o, h), W, bias_.value(0, o));
    }
    const T* w = weight_.value.row(o).data();
    for (std::size_t c = 0; c < in_channels_; ++c) {
      for (std::size_t dy = 0; dy < kernel_; ++dy) {
        for (std::size_t dx = 0; dx < kernel_; ++dx) {
          const T wv = w[(c * kernel_ + dy) * kernel_ + dx];
          const long shift = long(dx) - pad;
          const std::size_t out_lo = shift < 0 ? std::size_t(-shift) : 0;
          const std::size_t in_lo = shift > 0 ? std::size_t(shift) : 0;
          if (std::size_t(std::labs(shift)) >= W) continue;
          const std::size_t len = W - std::size_t(std::labs(shift));
          for (std::size_t h = 0; h < H; ++h) {
            const long src = long(h) + long(dy) - pad;
            if (src < 0 || src >= long(H)) continue;
            k.axpy(wv, x.line(c, std::size_t(src)) + in_lo, y.line(o, h) + out_lo, len);
          }
        }
      }
    }
  }
  x_ = x;
  cached_ = true;
  return y;
}

template <typename T>
Tensor3<T> Conv2d<T>::backward(const Tensor3<T>& dy, bool input_grad) {
  require_cache(cached_, name_);
  if (dy.channels() != out_channels_ || dy.height() != x_.height() ||
      dy.width() != x_.width()) {
    throw ShapeError(shape_message(name_, "gradient channels", out_channels_, dy.channels()));
  }
  cached_ = false;
  const auto& k = K<T>();
  const std::size_t H = x_.height();
  const std::size_t W = x_.width();
  const long pad = long(kernel_ / 2);
  Tensor3<T> dx;
  if (input_grad) dx = Tensor3<T>(in_channels_, H, W);
  for (std::size_t o = 0; o < out_channels_; ++o) {
    T bsum = 0;
    for (std::size_t h = 0; h < H; ++h) {
      const T* g = dy.line(o, h);
      for (std::size_t i = 0; i < W; ++i) bsum += g[i];
    }
    bias_.grad(0, o) += bsum;
    const T* w = weight_.value.row(o).data();
    T* gw = weight_.grad.row(o).data();
    for (std::size_t c = 0; c < in_channels_; ++c) {
      for (std::size_t ky = 0; ky < kernel_; ++ky) {
        for (std::size_t kx = 0; kx < kernel_; ++kx) {
          const std::size_t widx = (c * kernel_ + ky) * kernel_ + kx;
          const long shift = long(kx) - pad;
          const std::size_t out_lo = shift < 0 ? std::size_t(-shift) : 0;
          const std::size_t in_lo = shift > 0 ? std::size_t(shift) : 0;
          if (std::size_t(std::labs(shift)) >= W) continue;
          const std::size_t len = W - std::size_t(std::labs(shift));
          T acc = 0;
          for (std::size_t h = 0; h < H; ++h) {
            const long src = long(h) + long(ky) - pad;
            if (src < 0 || src >= long(H)) continue;
            const T* g = dy.line(o, h) + out_lo;
            acc += k.dot(x_.line(c, std::size_t(src)) + in_lo, g, len);
            if (input_grad) k.axpy(w[widx], g, dx.line(c, std::size_t(src)) + in_lo, len);
          }
          gw[widx] += acc;
        }
      }
    }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- BiLstm

template <typename T>
BiLstm<T>::BiLstm(std::string name, std::size_t input, std::size_t hidden)
    : name_(std::move(name)), input_(input), hidden_(hidden) {
  auto make = [&](Direction& d, const std::string& tag, bool reverse) {
    d.w_ih = Param<T>(name_ + "." + tag + ".w_ih", input, 4 * hidden);
    d.w_hh = Param<T>(name_ + "." + tag + ".w_hh", hidden, 4 * hidden);
    d.bias = Param<T>(name_ + "." + tag + ".bias", 1, 4 * hidden);
    d.reverse = reverse;
  };
  make(fwd_, "fwd", false);
  make(bwd_, "bwd", true);
}

template <typename T>
void BiLstm<T>::init_uniform(std::mt19937_64& rng) {
  for (Direction* d : {&fwd_, &bwd_}) {
    fill_uniform(d->w_ih.value, 1.0 / std::sqrt(double(input_)), rng);
    fill_uniform(d->w_hh.value, 1.0 / std::sqrt(double(hidden_)), rng);
    d->bias.value.fill(T(0));
    for (std::size_t j = hidden_; j < 2 * hidden_; ++j) d->bias.value(0, j) = T(1);
  }
}

template <typename T>
Tensor2<T> BiLstm<T>::forward(const Tensor2<T>& x) {
  if (x.cols() != input_) {
    throw ShapeError(shape_message(name_, "input width", input_, x.cols()));
  }
  Tensor2<T> out(x.rows(), 2 * hidden_);
  forward_direction(fwd_, x, out, 0);
  forward_direction(bwd_, x, out, hidden_);
  x_ = x;
  cached_ = true;
  check_finite(out, "bilstm output");
  return out;
}

template <typename T>
void BiLstm<T>::forward_direction(Direction& d, const Tensor2<T>& x,
                                  Tensor2<T>& out, std::size_t col_offset) {
  const auto& k = K<T>();
  const std::size_t steps = x.rows();
  const std::size_t H = hidden_;
  const std::size_t G = 4 * H;
  d.gates = Tensor2<T>(steps, G);
  d.cell = Tensor2<T>(steps, H);
  d.hidden = Tensor2<T>(steps, H);
  d.tanh_cell = Tensor2<T>(steps, H);
  const std::vector<T> zeros(H, T(0));
  const T* h_prev = zeros.data();
  const T* c_prev = zeros.data();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = d.reverse ? steps - 1 - s : s;
    T* g = d.gates.row(t).data();
    std::copy_n(d.bias.value.data(), G, g);
    k.gemv_t(x.row(t).data(), d.w_ih.value.data(), input_, G, g);
    k.gemv_t(h_prev, d.w_hh.value.data(), H, G, g);
    k.sigmoid(g, 2 * H);
    k.tanh(g + 2 * H, H);
    k.sigmoid(g + 3 * H, H);
    T* c = d.cell.row(t).data();
    T* h = d.hidden.row(t).data();
    T* tc = d.tanh_cell.row(t).data();
    for (std::size_t j = 0; j < H; ++j) c[j] = g[H + j] * c_prev[j] + g[j] * g[2 * H + j];
    std::copy_n(c, H, tc);
    k.tanh(tc, H);
    for (std::size_t j = 0; j < H; ++j) h[j] = g[3 * H + j] * tc[j];
    std::copy_n(h, H, out.row(t).data() + col_offset);
    h_prev = h;
    c_prev = c;
  }
}

template <typename T>
Tensor2<T> BiLstm<T>::backward(const Tensor2<T>& dy, bool input_grad) {
  require_cache(cached_, name_);
  if (dy.rows() != x_.rows() || dy.cols() != 2 * hidden_) {
    throw ShapeError(shape_message(name_, "upstream gradient width", 2 * hidden_,
                                   dy.cols()));
  }
  cached_ = false;
  Tensor2<T> dx;
  if (input_grad) dx = Tensor2<T>(x_.rows(), input_);
  backward_direction(fwd_, dy, 0, input_grad ? &dx : nullptr);
  backward_direction(bwd_, dy, hidden_, input_grad ? &dx : nullptr);
  return dx;
}

template <typename T>
void BiLstm<T>::backward_direction(Direction& d, const Tensor2<T>& dy,
                                   std::size_t col_offset, Tensor2<T>* dx) {
  const auto& k = K<T>();
  const std::size_t steps = dy.rows();
  const std::size_t H = hidden_;
  const std::size_t G = 4 * H;
  auto time_of = [&](std::size_t s) { return d.reverse ? steps - 1 - s : s; };

  // Steps after the last nonzero upstream gradient (in processing order)
  // carry zero gradient; start the reverse sweep there.
  std::size_t last = steps;
  for (std::size_t s = steps; s-- > 0;) {
    const T* g = dy.row(time_of(s)).data() + col_offset;
    if (std::any_of(g, g + H, [](T v) { return v != T(0); })) {
      last = s;
      break;
    }
  }
  if (last == steps) return;

  Tensor2<T> dgates(steps, G);
  std::vector<T> dh_next(H, T(0));
  std::vector<T> dc_next(H, T(0));
  std::vector<T> dh_prev(H);
  const std::vector<T> zeros(H, T(0));
  for (std::size_t s = last + 1; s-- > 0;) {
    const std::size_t t = time_of(s);
    const T* gate = d.gates.row(t).data();
    const T* tc = d.tanh_cell.row(t).data();
    const T* c_prev = s == 0 ? zeros.data() : d.cell.row(time_of(s - 1)).data();
    const T* up = dy.row(t).data() + col_offset;
    T* dg = dgates.row(t).data();
    for (std::size_t j = 0; j < H; ++j) {
      const T ig = gate[j], fg = gate[H + j], cg = gate[2 * H + j], og = gate[3 * H + j];
      const T dh = up[j] + dh_next[j];
      const T dc = dc_next[j] + dh * og * (T(1) - tc[j] * tc[j]);
      dg[j] = dc * cg * ig * (T(1) - ig);
      dg[H + j] = dc * c_prev[j] * fg * (T(1) - fg);
      dg[2 * H + j] = dc * ig * (T(1) - cg * cg);
      dg[3 * H + j] = dh * tc[j] * og * (T(1) - og);
      dc_next[j] = dc * fg;
    }
    std::fill(dh_prev.begin(), dh_prev.end(), T(0));
    k.gemv(d.w_hh.value.data(), H, G, dg, dh_prev.data());
    dh_next.swap(dh_prev);
  }

  // Rows of dgates that can be nonzero, as a contiguous time range.
  const std::size_t lo = d.reverse ? time_of(last) : 0;
  const std::size_t hi = d.reverse ? steps : last + 1;

  for (std::size_t t = lo; t < hi; ++t) {
    k.axpy(T(1), dgates.row(t).data(), d.bias.grad.data(), G);
  }
  // dW_ih[j, :] += sum_t x[t, j] * dgates[t, :]
  const Tensor2<T> xt = transpose(x_, lo, hi);
  for (std::size_t j = 0; j < input_; ++j) {
    k.gemv_t(xt.row(j).data(), dgates.row(lo).data(), hi - lo, G,
             d.w_ih.grad.row(j).data());
  }
  // dW_hh[j, :] += sum_t h_prev[t, j] * dgates[t, :], h_prev in processing order.
  Tensor2<T> prev(steps, H);
  for (std::size_t s = 1; s < steps; ++s) {
    std::copy_n(d.hidden.row(time_of(s - 1)).data(), H, prev.row(time_of(s)).data());
  }
  const Tensor2<T> prev_t = transpose(prev, lo, hi);
  for (std::size_t j = 0; j < H; ++j) {
    k.gemv_t(prev_t.row(j).data(), dgates.row(lo).data(), hi - lo, G,
             d.w_hh.grad.row(j).data());
  }
  if (dx != nullptr) {
    for (std::size_t t = lo; t < hi; ++t) {
      k.gemv(d.w_ih.value.data(), input_, G, dgates.row(t).data(), dx->row(t).data());
    }
  }
}

template <typename T>
void BiLstm<T>::collect(ParamList<T>& out) {
  for (Direction* d : {&fwd_, &bwd_}) {
    out.push_back(&d->w_ih);
    out.push_back(&d->w_hh);
    out.push_back(&d->bias);
  }
}

// ---------------------------------------------------------------- loss

template <typename T>
LossResult<T> masked_bce(const Tensor2<T>& pred, const Tensor2<T>& target,
                         const Tensor2<std::uint8_t>& mask, Reduction reduction) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      pred.rows() != mask.rows() || pred.cols() != mask.cols()) {
    throw ShapeError(shape_message("masked_bce", "element count", pred.size(),
                                   target.size() != pred.size() ? target.size()
                                                                : mask.size()));
  }
  LossResult<T> r;
  r.grad = Tensor2<T>(pred.rows(), pred.cols());
  const T lo = T(kBceClamp);
  const T hi = T(1) - T(kBceClamp);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask.flat()[i] == 0) continue;
    ++r.mask_count;
    const T p = std::clamp(pred.flat()[i], lo, hi);
    const T y = target.flat()[i];
    total -= double(y) * std::log(double(p)) + (1.0 - double(y)) * std::log(1.0 - double(p));
    r.grad.flat()[i] = (p - y) / (p * (T(1) - p));
  }
  if (reduction == Reduction::kMeanOverMask) {
    if (r.mask_count == 0) {
      r.empty_mask = true;
      r.loss = T(0);
      return r;
    }
    const T scale = T(1) / T(r.mask_count);
    for (auto& g : r.grad.flat()) g *= scale;
    total /= double(r.mask_count);
  }
  r.loss = T(total);
  return r;
}

// ---------------------------------------------------------------- Adam

double scheduled_lr(const AdamConfig& cfg, std::uint64_t step) {
  const std::uint64_t intervals = cfg.decay_steps == 0 ? 0 : step / cfg.decay_steps;
  return cfg.base_lr * std::pow(cfg.decay_rate, double(intervals));
}

template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  for (const auto* p : params) {
    for (T g : p->grad.flat()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in " + p->name);
    }
  }
  if (state.m.size() != params.size()) {
    if (state.step != 0 || !state.m.empty()) {
      throw ShapeError("adam: optimizer state has " + std::to_string(state.m.size()) +
                       " moments for " + std::to_string(params.size()) + " parameters");
    }
    for (const auto* p : params) {
      state.m.emplace_back(p->value.rows(), p->value.cols());
      state.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i]->value.size()) {
      throw ShapeError(shape_message("adam moment for " + params[i]->name, "size",
                                     params[i]->value.size(), state.m[i].size()));
    }
  }

  double clip_scale = 1.0;
  if (cfg.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto* p : params) {
      for (T g : p->grad.flat()) sq += double(g) * double(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip_norm) clip_scale = cfg.grad_clip_norm / norm;
  }

  const double lr = scheduled_lr(cfg, state.step);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto m = state.m[i].flat();
    auto v = state.v[i].flat();
    auto w = p.value.flat();
    auto g = p.grad.flat();
    for (std::size_t j = 0; j < w.size(); ++j) {
      T gj = T(double(g[j]) * clip_scale);
      if (cfg.weight_decay > 0.0) gj += T(cfg.weight_decay) * w[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      const double mhat = double(m[j]) / bc1;
      const double vhat = double(v[j]) / bc2;
      w[j] = T(double(w[j]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

#define VELOCORR_INSTANTIATE(T)                                             \
  template T sigmoid<T>(T);                                                 \
  template void zero_grads<T>(const ParamList<T>&);                         \
  template class Linear<T>;                                                 \
  template class Sigmoid<T>;                                                \
  template class Relu<T>;                                                   \
  template class AvgPoolWidth2<T>;                                          \
  template class Conv2d<T>;                                                 \
  template class BiLstm<T>;                                                 \
  template LossResult<T> masked_bce<T>(const Tensor2<T>&, const Tensor2<T>&, \
                                       const Tensor2<std::uint8_t>&, Reduction); \
  template void adam_step<T>(const ParamList<T>&, AdamState<T>&, const AdamConfig&);

VELOCORR_INSTANTIATE(float)
VELOCORR_INSTANTIATE(double)

#undef VELOCORR_INSTANTIATE

}  // namespace velocorr::nn
