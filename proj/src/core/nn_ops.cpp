#include "core/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/blas.hpp"

namespace ldst {
namespace {

int out_extent(int in, int kernel, const ConvGeometry& g) {
  return (in + 2 * g.pad - kernel) / g.stride + 1;
}

template <typename T>
bool is_pointwise(const ConvParams<T>& p, const ConvGeometry& g) {
  return p.kernel == 1 && g.stride == 1 && g.pad == 0;
}

// Maps a padded coordinate back to the source, or -1 for zero padding.
int source_index(int i, int n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::zero) return -1;
  return reflect_index(i, n);
}

template <typename T>
void im2col(const Tensor<T>& x, int kernel, const ConvGeometry& g, int oh, int ow,
            std::vector<T>& col) {
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  col.assign(static_cast<std::size_t>(x.channels) * kernel * kernel * n, T{0});
  std::vector<int> xs(static_cast<std::size_t>(ow) * kernel);
  for (int kx = 0; kx < kernel; ++kx)
    for (int ox = 0; ox < ow; ++ox)
      xs[kx * ow + ox] = source_index(ox * g.stride - g.pad + kx, x.width, g.mode);
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.data.data() + c * x.plane();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = col.data() + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * n;
        const int* xmap = xs.data() + kx * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int sy = source_index(oy * g.stride - g.pad + ky, x.height, g.mode);
          if (sy < 0) continue;
          const T* src_row = src + static_cast<std::size_t>(sy) * x.width;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int sx = xmap[ox];
            if (sx >= 0) dst[ox] = src_row[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& col, int kernel, const ConvGeometry& g, int oh, int ow,
            Tensor<T>& grad_x) {
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  std::vector<int> xs(static_cast<std::size_t>(ow) * kernel);
  for (int kx = 0; kx < kernel; ++kx)
    for (int ox = 0; ox < ow; ++ox)
      xs[kx * ow + ox] = source_index(ox * g.stride - g.pad + kx, grad_x.width, g.mode);
  for (int c = 0; c < grad_x.channels; ++c) {
    T* dst = grad_x.data.data() + c * grad_x.plane();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* row =
            col.data() + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * n;
        const int* xmap = xs.data() + kx * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int sy = source_index(oy * g.stride - g.pad + ky, grad_x.height, g.mode);
          if (sy < 0) continue;
          T* dst_row = dst + static_cast<std::size_t>(sy) * grad_x.width;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int sx = xmap[ox];
            if (sx >= 0) dst_row[sx] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p, const ConvGeometry& g) {
  if (x.channels != p.in_channels) {
    fail(ErrorCode::dimension, "conv2d: input has " + std::to_string(x.channels) +
                                   " channels, kernel expects " + std::to_string(p.in_channels));
  }
  const int oh = out_extent(x.height, p.kernel, g);
  const int ow = out_extent(x.width, p.kernel, g);
  require(oh > 0 && ow > 0, ErrorCode::dimension, "conv2d: input smaller than kernel");
  Tensor<T> out(p.out_channels, oh, ow);
  const int n = oh * ow;
  for (int o = 0; o < p.out_channels; ++o) std::fill_n(out.data.data() + o * n, n, p.bias[o]);
  const int k = static_cast<int>(p.fan_in());
  if (is_pointwise(p, g)) {
    gemm<T>(false, false, p.out_channels, n, k, T{1}, p.weight.data(), k, x.data.data(), n, T{1},
            out.data.data(), n);
  } else {
    std::vector<T> col;
    im2col(x, p.kernel, g, oh, ow, col);
    gemm<T>(false, false, p.out_channels, n, k, T{1}, p.weight.data(), k, col.data(), n, T{1},
            out.data.data(), n);
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const ConvGeometry& g,
                          const Tensor<T>& grad_out, std::type_identity_t<ConvParams<T>>* grad_params,
                          bool need_input_grad) {
  const int oh = grad_out.height;
  const int ow = grad_out.width;
  const int n = oh * ow;
  const int k = static_cast<int>(p.fan_in());
  const bool pointwise = is_pointwise(p, g);
  std::vector<T> col;
  const T* col_ptr = x.data.data();
  if (!pointwise && grad_params != nullptr) {
    im2col(x, p.kernel, g, oh, ow, col);
    col_ptr = col.data();
  }
  if (grad_params != nullptr) {
    gemm<T>(false, true, p.out_channels, k, n, T{1}, grad_out.data.data(), n, col_ptr, n, T{1},
            grad_params->weight.data(), k);
    for (int o = 0; o < p.out_channels; ++o) {
      const T* row = grad_out.data.data() + static_cast<std::size_t>(o) * n;
      T acc{0};
      for (int i = 0; i < n; ++i) acc += row[i];
      grad_params->bias[o] += acc;
    }
  }
  if (!need_input_grad) return {};
  Tensor<T> grad_x(x.channels, x.height, x.width);
  if (pointwise) {
    gemm<T>(true, false, k, n, p.out_channels, T{1}, p.weight.data(), k, grad_out.data.data(), n,
            T{0}, grad_x.data.data(), n);
    return grad_x;
  }
  std::vector<T> grad_col(static_cast<std::size_t>(k) * n);
  gemm<T>(true, false, k, n, p.out_channels, T{1}, p.weight.data(), k, grad_out.data.data(), n,
          T{0}, grad_col.data(), n);
  col2im(grad_col, p.kernel, g, oh, ow, grad_x);
  return grad_x;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T{0} ? v : T{0};
}

template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation.data[i] > T{0})) grad.data[i] = T{0};
}

template <typename T>
void elu_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T{0} ? v : std::expm1(v);
}

template <typename T>
void elu_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation) {
  // d/dx expm1(x) = y + 1 for the negative branch.
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation.data[i] > T{0})) grad.data[i] *= activation.data[i] + T{1};
}

template <typename T>
void sigmoid_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = T{1} / (T{1} + std::exp(-v));
}

template <typename T>
void sigmoid_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    grad.data[i] *= activation.data[i] * (T{1} - activation.data[i]);
}

template <typename T>
PoolResult<T> max_pool(const Tensor<T>& x, int kernel, int stride, int pad) {
  const int oh = (x.height + 2 * pad - kernel) / stride + 1;
  const int ow = (x.width + 2 * pad - kernel) / stride + 1;
  require(oh > 0 && ow > 0, ErrorCode::dimension, "max_pool: input smaller than window");
  PoolResult<T> r{Tensor<T>(x.channels, oh, ow), {}};
  r.argmax.assign(r.output.size(), -1);
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.data.data() + c * x.plane();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int best_idx = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= x.height) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int xx = ox * stride - pad + kx;
            if (xx < 0 || xx >= x.width) continue;
            const int idx = y * x.width + xx;
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(c) * oh + oy) * ow + ox;
        r.output.data[o] = best_idx >= 0 ? best : T{0};
        r.argmax[o] = best_idx;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> max_pool_backward(const PoolResult<T>& pooled, const Tensor<T>& grad_out, int in_h,
                            int in_w) {
  Tensor<T> grad(grad_out.channels, in_h, in_w);
  const std::size_t out_plane = grad_out.plane();
  for (int c = 0; c < grad_out.channels; ++c) {
    T* dst = grad.data.data() + c * grad.plane();
    for (std::size_t i = 0; i < out_plane; ++i) {
      const std::size_t o = c * out_plane + i;
      if (pooled.argmax[o] >= 0) dst[pooled.argmax[o]] += grad_out.data[o];
    }
  }
  return grad;
}

namespace {
inline int nearest_source(int o, int in, int out) {
  return std::min(static_cast<int>(static_cast<long long>(o) * in / out), in - 1);
}
}  // namespace

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, int out_h, int out_w) {
  Tensor<T> out(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out_h; ++y) {
      const int sy = nearest_source(y, x.height, out_h);
      for (int xx = 0; xx < out_w; ++xx)
        out.at(c, y, xx) = x.at(c, sy, nearest_source(xx, x.width, out_w));
    }
  return out;
}

template <typename T>
Tensor<T> resize_nearest_backward(const Tensor<T>& grad_out, int in_h, int in_w) {
  Tensor<T> grad(grad_out.channels, in_h, in_w);
  for (int c = 0; c < grad_out.channels; ++c)
    for (int y = 0; y < grad_out.height; ++y) {
      const int sy = nearest_source(y, in_h, grad_out.height);
      for (int xx = 0; xx < grad_out.width; ++xx)
        grad.at(c, sy, nearest_source(xx, in_w, grad_out.width)) += grad_out.at(c, y, xx);
    }
  return grad;
}

namespace {
struct LinearTap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}
}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  require(out_h > 0 && out_w > 0, ErrorCode::argument, "resize: target must be positive");
  const auto ty = linear_taps(x.height, out_h);
  const auto tx = linear_taps(x.width, out_w);
  Tensor<T> out(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out_h; ++y) {
      const T wy = static_cast<T>(ty[y].w1);
      for (int xx = 0; xx < out_w; ++xx) {
        const T wx = static_cast<T>(tx[xx].w1);
        const T top = x.at(c, ty[y].i0, tx[xx].i0) * (T{1} - wx) + x.at(c, ty[y].i0, tx[xx].i1) * wx;
        const T bot = x.at(c, ty[y].i1, tx[xx].i0) * (T{1} - wx) + x.at(c, ty[y].i1, tx[xx].i1) * wx;
        out.at(c, y, xx) = top * (T{1} - wy) + bot * wy;
      }
    }
  return out;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& grad_out, int in_h, int in_w) {
  const auto ty = linear_taps(in_h, grad_out.height);
  const auto tx = linear_taps(in_w, grad_out.width);
  Tensor<T> grad(grad_out.channels, in_h, in_w);
  for (int c = 0; c < grad_out.channels; ++c)
    for (int y = 0; y < grad_out.height; ++y) {
      const T wy = static_cast<T>(ty[y].w1);
      for (int xx = 0; xx < grad_out.width; ++xx) {
        const T wx = static_cast<T>(tx[xx].w1);
        const T g = grad_out.at(c, y, xx);
        grad.at(c, ty[y].i0, tx[xx].i0) += g * (T{1} - wy) * (T{1} - wx);
        grad.at(c, ty[y].i0, tx[xx].i1) += g * (T{1} - wy) * wx;
        grad.at(c, ty[y].i1, tx[xx].i0) += g * wy * (T{1} - wx);
        grad.at(c, ty[y].i1, tx[xx].i1) += g * wy * wx;
      }
    }
  return grad;
}

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, int out_h, int out_w) {
  Tensor<T> out(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out_h; ++y) {
      const int sy = reflect_index(y, x.height);
      for (int xx = 0; xx < out_w; ++xx) out.at(c, y, xx) = x.at(c, sy, reflect_index(xx, x.width));
    }
  return out;
}

template <typename T>
Tensor<T> pad_reflect_backward(const Tensor<T>& grad_out, int in_h, int in_w) {
  Tensor<T> grad(grad_out.channels, in_h, in_w);
  for (int c = 0; c < grad_out.channels; ++c)
    for (int y = 0; y < grad_out.height; ++y) {
      const int sy = reflect_index(y, in_h);
      for (int xx = 0; xx < grad_out.width; ++xx)
        grad.at(c, sy, reflect_index(xx, in_w)) += grad_out.at(c, y, xx);
    }
  return grad;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, int out_h, int out_w) {
  require(out_h <= x.height && out_w <= x.width, ErrorCode::dimension, "crop: target too large");
  Tensor<T> out(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out_h; ++y)
      std::copy_n(&x.at(c, y, 0), out_w, &out.at(c, y, 0));
  return out;
}

template <typename T>
Tensor<T> mean_variance_norm(const Tensor<T>& x, T eps) {
  Tensor<T> out(x.channels, x.height, x.width);
  const std::size_t n = x.plane();
  for (int c = 0; c < x.channels; ++c) {
    auto src = x.channel(c);
    auto dst = out.channel(c);
    T mean{0};
    for (T v : src) mean += v;
    mean /= static_cast<T>(n);
    T var{0};
    for (T v : src) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T inv = T{1} / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] - mean) * inv;
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.height == b.height && a.width == b.width, ErrorCode::dimension,
          "concat: spatial mismatch");
  Tensor<T> out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
  return out;
}

template <typename T>
Tensor<T> attention_forward(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& value,
                            std::vector<T>& attention) {
  require(query.channels == key.channels, ErrorCode::dimension,
          "attention: query/key channel mismatch");
  require(key.height == value.height && key.width == value.width, ErrorCode::dimension,
          "attention: key/value spatial mismatch");
  const int c = query.channels;
  const int nq = static_cast<int>(query.plane());
  const int nk = static_cast<int>(key.plane());
  attention.assign(static_cast<std::size_t>(nq) * nk, T{0});
  // scores (nq x nk) = query^T (nq x c) * key (c x nk)
  gemm<T>(true, false, nq, nk, c, T{1}, query.data.data(), nq, key.data.data(), nk, T{0},
          attention.data(), nk);
  for (int i = 0; i < nq; ++i) {
    T* row = attention.data() + static_cast<std::size_t>(i) * nk;
    const T mx = *std::max_element(row, row + nk);
    T sum{0};
    for (int j = 0; j < nk; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const T inv = T{1} / sum;
    for (int j = 0; j < nk; ++j) row[j] *= inv;
  }
  Tensor<T> out(value.channels, query.height, query.width);
  // out (cv x nq) = value (cv x nk) * attention^T (nk x nq)
  gemm<T>(false, true, value.channels, nq, nk, T{1}, value.data.data(), nk, attention.data(), nk,
          T{0}, out.data.data(), nq);
  return out;
}

template <typename T>
AttentionGrads<T> attention_backward(const Tensor<T>& query, const Tensor<T>& key,
                                     const Tensor<T>& value, const std::vector<T>& attention,
                                     const Tensor<T>& grad_out) {
  const int c = query.channels;
  const int nq = static_cast<int>(query.plane());
  const int nk = static_cast<int>(key.plane());
  AttentionGrads<T> g{Tensor<T>(query.channels, query.height, query.width),
                      Tensor<T>(key.channels, key.height, key.width),
                      Tensor<T>(value.channels, value.height, value.width)};
  // dV (cv x nk) = dO (cv x nq) * A (nq x nk)
  gemm<T>(false, false, value.channels, nk, nq, T{1}, grad_out.data.data(), nq, attention.data(),
          nk, T{0}, g.value.data.data(), nk);
  // dA (nq x nk) = dO^T (nq x cv) * V (cv x nk)
  std::vector<T> grad_scores(static_cast<std::size_t>(nq) * nk);
  gemm<T>(true, false, nq, nk, value.channels, T{1}, grad_out.data.data(), nq, value.data.data(),
          nk, T{0}, grad_scores.data(), nk);
  for (int i = 0; i < nq; ++i) {
    T* d = grad_scores.data() + static_cast<std::size_t>(i) * nk;
    const T* a = attention.data() + static_cast<std::size_t>(i) * nk;
    T dot{0};
    for (int j = 0; j < nk; ++j) dot += d[j] * a[j];
    for (int j = 0; j < nk; ++j) d[j] = a[j] * (d[j] - dot);
  }
  // dQ (c x nq) = K (c x nk) * dS^T (nk x nq)
  gemm<T>(false, true, c, nq, nk, T{1}, key.data.data(), nk, grad_scores.data(), nk, T{0},
          g.query.data.data(), nq);
  // dK (c x nk) = Q (c x nq) * dS (nq x nk)
  gemm<T>(false, false, c, nk, nq, T{1}, query.data.data(), nq, grad_scores.data(), nk, T{0},
          g.key.data.data(), nk);
  return g;
}

#define LDST_INSTANTIATE(T)                                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&, const ConvGeometry&);      \
  template Tensor<T> conv2d_backward(const Tensor<T>&, const ConvParams<T>&,                   \
                                     const ConvGeometry&, const Tensor<T>&, ConvParams<T>*,    \
                                     bool);                                                    \
  template void relu_inplace(Tensor<T>&);                                                      \
  template void relu_backward_inplace(Tensor<T>&, const Tensor<T>&);                           \
  template void elu_inplace(Tensor<T>&);                                                       \
  template void elu_backward_inplace(Tensor<T>&, const Tensor<T>&);                            \
  template void sigmoid_inplace(Tensor<T>&);                                                   \
  template void sigmoid_backward_inplace(Tensor<T>&, const Tensor<T>&);                        \
  template PoolResult<T> max_pool(const Tensor<T>&, int, int, int);                            \
  template Tensor<T> max_pool_backward(const PoolResult<T>&, const Tensor<T>&, int, int);      \
  template Tensor<T> resize_nearest(const Tensor<T>&, int, int);                               \
  template Tensor<T> resize_nearest_backward(const Tensor<T>&, int, int);                      \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int, int);                              \
  template Tensor<T> resize_bilinear_backward(const Tensor<T>&, int, int);                     \
  template Tensor<T> pad_reflect(const Tensor<T>&, int, int);                                  \
  template Tensor<T> pad_reflect_backward(const Tensor<T>&, int, int);                         \
  template Tensor<T> crop(const Tensor<T>&, int, int);                                         \
  template Tensor<T> mean_variance_norm(const Tensor<T>&, T);                                  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> attention_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                       std::vector<T>&);                                       \
  template AttentionGrads<T> attention_backward(const Tensor<T>&, const Tensor<T>&,            \
                                                const Tensor<T>&, const std::vector<T>&,       \
                                                const Tensor<T>&);

LDST_INSTANTIATE(float)
LDST_INSTANTIATE(double)
#undef LDST_INSTANTIATE

}  // namespace ldst
