#pragma once

#include <cstdint>
#include <vector>
#include <type_traits>

#include "core/tensor.hpp"

namespace ldst {

enum class PadMode { zero, reflect };

// Mirror index into [0, n) without repeating the edge sample; wraps for
// offsets larger than the extent.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename T>
struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 1;
  std::vector<T> weight;  // out x in x k x k
  std::vector<T> bias;    // out

  ConvParams() = default;
  ConvParams(int out, int in, int k)
      : out_channels(out), in_channels(in), kernel(k),
        weight(static_cast<std::size_t>(out) * in * k * k, T{0}), bias(out, T{0}) {}

  std::size_t fan_in() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }

  template <typename U>
  ConvParams<U> cast() const {
    ConvParams<U> out(out_channels, in_channels, kernel);
    for (std::size_t i = 0; i < weight.size(); ++i) out.weight[i] = static_cast<U>(weight[i]);
    for (std::size_t i = 0; i < bias.size(); ++i) out.bias[i] = static_cast<U>(bias[i]);
    return out;
  }
};

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  PadMode mode = PadMode::zero;
};

// "Same" geometry for an odd kernel.
inline ConvGeometry same_geometry(int kernel, PadMode mode) { return {1, kernel / 2, mode}; }

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p, const ConvGeometry& g);

// Accumulates parameter gradients into *grad_params when non-null and returns
// the input gradient when need_input_grad is set (empty tensor otherwise).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const ConvGeometry& g,
                          const Tensor<T>& grad_out, std::type_identity_t<ConvParams<T>>* grad_params,
                          bool need_input_grad);

template <typename T>
void relu_inplace(Tensor<T>& x);
// Masks grad by (activation > 0); `activation` is the post-ReLU output.
template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation);

template <typename T>
void elu_inplace(Tensor<T>& x);
template <typename T>
void elu_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation);

template <typename T>
void sigmoid_inplace(Tensor<T>& x);
template <typename T>
void sigmoid_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::int32_t> argmax;  // index into the input plane, -1 when the window was all padding
};

template <typename T>
PoolResult<T> max_pool(const Tensor<T>& x, int kernel, int stride, int pad);
template <typename T>
Tensor<T> max_pool_backward(const PoolResult<T>& pooled, const Tensor<T>& grad_out, int in_h,
                            int in_w);

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, int out_h, int out_w);
template <typename T>
Tensor<T> resize_nearest_backward(const Tensor<T>& grad_out, int in_h, int in_w);

// Half-pixel-centre bilinear resampling with edge clamping.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w);
template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& grad_out, int in_h, int in_w);

// Reflect-pads on the bottom/right edges up to (out_h, out_w).
template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, int out_h, int out_w);
template <typename T>
Tensor<T> pad_reflect_backward(const Tensor<T>& grad_out, int in_h, int in_w);

// Top-left crop.
template <typename T>
Tensor<T> crop(const Tensor<T>& x, int out_h, int out_w);

// Per-channel spatial standardisation: (x - mean) / sqrt(var + eps).
template <typename T>
Tensor<T> mean_variance_norm(const Tensor<T>& x, T eps);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Softmax attention over flattened spatial positions. query/key share the
// channel count; value is sampled at key positions. attention is stored
// row-major as (query positions) x (key positions).
template <typename T>
Tensor<T> attention_forward(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& value,
                            std::vector<T>& attention);

template <typename T>
struct AttentionGrads {
  Tensor<T> query;
  Tensor<T> key;
  Tensor<T> value;
};

template <typename T>
AttentionGrads<T> attention_backward(const Tensor<T>& query, const Tensor<T>& key,
                                     const Tensor<T>& value, const std::vector<T>& attention,
                                     const Tensor<T>& grad_out);

}  // namespace ldst
