#include "core/depth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <random>

#include "core/nn_ops.hpp"

namespace ldst {

DepthBackend parse_depth_backend(const std::string& name) {
  if (name == "stub") return {DepthKind::analytic_stub, std::nullopt};
  if (name == "monodepth") return {DepthKind::pretrained_monodepth, std::nullopt};
  fail(ErrorCode::argument, "unknown depth backend '" + name + "' (expected monodepth or stub)");
}

std::string depth_backend_name(const DepthBackend& backend) {
  return backend.kind == DepthKind::analytic_stub ? "stub" : "monodepth";
}

std::filesystem::path resolve_weights(const std::optional<std::filesystem::path>& explicit_path,
                                      const std::string& default_name) {
  if (explicit_path) return *explicit_path;
  if (const char* dir = std::getenv("LDSTYLE_WEIGHTS_DIR"); dir && *dir) {
    return std::filesystem::path(dir) / default_name;
  }
  return std::filesystem::path("weights") / default_name;
}

template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& x) {
  Tensor<T> out(x.channels, x.height, x.width);
  const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  if (!(*hi > *lo)) return out;
  const T inv = T{1} / (*hi - *lo);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = (x.data[i] - *lo) * inv;
  return out;
}

template <typename T>
Tensor<T> minmax_normalize_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  Tensor<T> grad(x.channels, x.height, x.width);
  const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  if (!(*hi > *lo)) return grad;
  const T range = *hi - *lo;
  const T inv = T{1} / range;
  T grad_lo{0};
  T grad_hi{0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T y = (x.data[i] - *lo) * inv;
    grad.data[i] = grad_out.data[i] * inv;
    grad_lo += grad_out.data[i] * (y - T{1}) * inv;
    grad_hi -= grad_out.data[i] * y * inv;
  }
  grad.data[lo - x.data.begin()] += grad_lo;
  grad.data[hi - x.data.begin()] += grad_hi;
  return grad;
}

template Tensor<float> minmax_normalize(const Tensor<float>&);
template Tensor<double> minmax_normalize(const Tensor<double>&);
template Tensor<float> minmax_normalize_backward(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> minmax_normalize_backward(const Tensor<double>&, const Tensor<double>&);

namespace {

// Separable box mean with edge replication; `transpose` applies the adjoint.
template <typename T>
Tensor<T> box_filter(const Tensor<T>& x, int size, bool transpose) {
  const int r = size / 2;
  const T norm = T{1} / static_cast<T>(size);
  const int h = x.height;
  const int w = x.width;
  Tensor<T> tmp(1, h, w);
  Tensor<T> out(1, h, w);
  auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  if (!transpose) {
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        T acc{0};
        for (int d = -r; d <= r; ++d) acc += x.at(0, y, clampi(xx + d, w));
        tmp.at(0, y, xx) = acc * norm;
      }
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        T acc{0};
        for (int d = -r; d <= r; ++d) acc += tmp.at(0, clampi(y + d, h), xx);
        out.at(0, y, xx) = acc * norm;
      }
  } else {
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int d = -r; d <= r; ++d) tmp.at(0, clampi(y + d, h), xx) += x.at(0, y, xx) * norm;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int d = -r; d <= r; ++d) out.at(0, y, clampi(xx + d, w)) += tmp.at(0, y, xx) * norm;
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> StubDepth<T>::estimate(const Tensor<T>& rgb) const {
  Tensor<T> blurred = box_filter(luminance(rgb), kBoxSize, false);
  for (auto& v : blurred.data) v = T{1} - v;
  return minmax_normalize(blurred);
}

template <typename T>
Tensor<T> StubDepth<T>::backward(const Tensor<T>& rgb, const Tensor<T>& grad_map) const {
  Tensor<T> inverted = box_filter(luminance(rgb), kBoxSize, false);
  for (auto& v : inverted.data) v = T{1} - v;
  Tensor<T> g = minmax_normalize_backward(inverted, grad_map);
  for (auto& v : g.data) v = -v;
  return luminance_backward(box_filter(g, kBoxSize, true));
}

template class StubDepth<float>;
template class StubDepth<double>;

// ---------------------------------------------------------------------------
// Monodepth network

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kMinDepth = 0.1;
constexpr double kMaxDepth = 100.0;
constexpr std::array<int, 5> kEncChannels{64, 64, 128, 256, 512};
constexpr std::array<int, 5> kDecChannels{16, 32, 64, 128, 256};

template <typename T>
ConvParams<T> load_conv(const Archive& a, const std::string& name, bool with_bias) {
  const auto& w = a.get(name + ".weight");
  if (w.shape.size() != 4 || w.shape[2] != w.shape[3]) {
    fail(ErrorCode::checkpoint_format, "bad shape for " + name + ".weight");
  }
  ConvParams<T> p(static_cast<int>(w.shape[0]), static_cast<int>(w.shape[1]),
                  static_cast<int>(w.shape[2]));
  const auto wv = w.as_f64();
  std::transform(wv.begin(), wv.end(), p.weight.begin(), [](double v) { return static_cast<T>(v); });
  if (with_bias) {
    const auto& b = a.get(name + ".bias");
    if (b.element_count() != p.out_channels) fail(ErrorCode::checkpoint_format, "bad shape for " + name + ".bias");
    const auto bv = b.as_f64();
    std::transform(bv.begin(), bv.end(), p.bias.begin(), [](double v) { return static_cast<T>(v); });
  }
  return p;
}

// Folds inference-mode batch norm into the preceding bias-free convolution.
template <typename T>
void fold_batch_norm(const Archive& a, const std::string& bn, ConvParams<T>& conv) {
  const auto gamma = a.get(bn + ".weight").as_f64();
  const auto beta = a.get(bn + ".bias").as_f64();
  const auto mean = a.get(bn + ".running_mean").as_f64();
  const auto var = a.get(bn + ".running_var").as_f64();
  const auto n = static_cast<std::size_t>(conv.out_channels);
  if (gamma.size() != n || beta.size() != n || mean.size() != n || var.size() != n) {
    fail(ErrorCode::checkpoint_format, "bad shape for " + bn);
  }
  const std::size_t per_out = conv.fan_in();
  for (std::size_t o = 0; o < n; ++o) {
    const double scale = gamma[o] / std::sqrt(var[o] + kBnEps);
    for (std::size_t i = 0; i < per_out; ++i) conv.weight[o * per_out + i] *= static_cast<T>(scale);
    conv.bias[o] = static_cast<T>(beta[o] - mean[o] * scale);
  }
}

}  // namespace

template <typename T>
struct MonodepthDepth<T>::Network {
  struct Block {
    ConvParams<T> conv1;
    ConvParams<T> conv2;
    std::optional<ConvParams<T>> downsample;
    int stride = 1;
  };
  struct BlockTape {
    Tensor<T> input;
    Tensor<T> mid;  // post-ReLU after conv1
    Tensor<T> out;  // post-ReLU after the residual sum
  };
  struct DecoderTape {
    Tensor<T> input;
    Tensor<T> a0;
    Tensor<T> cat;
    Tensor<T> a1;
  };
  struct Tape {
    Tensor<T> input;  // normalised feed-resolution image
    Tensor<T> stem;   // post-ReLU conv1
    PoolResult<T> pool;
    std::array<std::vector<BlockTape>, 4> layers;
    std::array<DecoderTape, 5> decoder;  // indexed by scale i
    Tensor<T> disp;                      // sigmoid output
  };

  ConvParams<T> stem;
  std::array<std::array<Block, 2>, 4> layers;
  std::array<ConvParams<T>, 5> upconv0;
  std::array<ConvParams<T>, 5> upconv1;
  ConvParams<T> dispconv;
  int feed_h = 192;
  int feed_w = 640;

  static ConvGeometry geo(int stride, int pad) { return {stride, pad, PadMode::zero}; }
  static ConvGeometry reflect3() { return {1, 1, PadMode::reflect}; }

  Tensor<T> block_forward(const Block& b, const Tensor<T>& x, BlockTape& t) const {
    t.input = x;
    t.mid = conv2d(x, b.conv1, geo(b.stride, 1));
    relu_inplace(t.mid);
    Tensor<T> y = conv2d(t.mid, b.conv2, geo(1, 1));
    if (b.downsample) {
      add_inplace(y, conv2d(x, *b.downsample, geo(b.stride, 0)));
    } else {
      add_inplace(y, x);
    }
    relu_inplace(y);
    t.out = y;
    return y;
  }

  Tensor<T> block_backward(const Block& b, const BlockTape& t, Tensor<T> grad) const {
    relu_backward_inplace(grad, t.out);
    Tensor<T> g_mid = conv2d_backward(t.mid, b.conv2, geo(1, 1), grad, nullptr, true);
    relu_backward_inplace(g_mid, t.mid);
    Tensor<T> g_in = conv2d_backward(t.input, b.conv1, geo(b.stride, 1), g_mid, nullptr, true);
    if (b.downsample) {
      add_inplace(g_in, conv2d_backward(t.input, *b.downsample, geo(b.stride, 0), grad, nullptr, true));
    } else {
      add_inplace(g_in, grad);
    }
    return g_in;
  }

  // Disparity in (0,1) at feed resolution.
  Tensor<T> forward(const Tensor<T>& feed, Tape& t) const {
    t.input = feed;
    for (auto& v : t.input.data) v = (v - T(0.45)) / T(0.225);
    t.stem = conv2d(t.input, stem, geo(2, 3));
    relu_inplace(t.stem);
    t.pool = max_pool(t.stem, 3, 2, 1);
    std::array<Tensor<T>, 5> features;
    features[0] = t.stem;
    Tensor<T> x = t.pool.output;
    for (int l = 0; l < 4; ++l) {
      t.layers[l].resize(2);
      for (int b = 0; b < 2; ++b) x = block_forward(layers[l][b], x, t.layers[l][b]);
      features[l + 1] = x;
    }
    for (int i = 4; i >= 0; --i) {
      auto& d = t.decoder[i];
      d.input = x;
      d.a0 = conv2d(x, upconv0[i], reflect3());
      elu_inplace(d.a0);
      Tensor<T> up = resize_nearest(d.a0, d.a0.height * 2, d.a0.width * 2);
      d.cat = i > 0 ? concat_channels(up, features[i - 1]) : up;
      d.a1 = conv2d(d.cat, upconv1[i], reflect3());
      elu_inplace(d.a1);
      x = d.a1;
    }
    t.disp = conv2d(x, dispconv, reflect3());
    sigmoid_inplace(t.disp);
    return t.disp;
  }

  Tensor<T> backward(const Tape& t, Tensor<T> grad_disp) const {
    sigmoid_backward_inplace(grad_disp, t.disp);
    Tensor<T> g = conv2d_backward(t.decoder[0].a1, dispconv, reflect3(), grad_disp, nullptr, true);
    std::array<Tensor<T>, 5> feature_grads;
    for (int i = 0; i <= 4; ++i) {
      const auto& d = t.decoder[i];
      elu_backward_inplace(g, d.a1);
      Tensor<T> g_cat = conv2d_backward(d.cat, upconv1[i], reflect3(), g, nullptr, true);
      const int up_c = d.a0.channels;
      Tensor<T> g_up(up_c, g_cat.height, g_cat.width);
      std::copy_n(g_cat.data.begin(), g_up.size(), g_up.data.begin());
      if (i > 0) {
        Tensor<T> g_feat(g_cat.channels - up_c, g_cat.height, g_cat.width);
        std::copy(g_cat.data.begin() + g_up.size(), g_cat.data.end(), g_feat.data.begin());
        feature_grads[i - 1] = std::move(g_feat);
      }
      Tensor<T> g_a0 = resize_nearest_backward(g_up, d.a0.height, d.a0.width);
      elu_backward_inplace(g_a0, d.a0);
      g = conv2d_backward(d.input, upconv0[i], reflect3(), g_a0, nullptr, true);
    }
    // g is now the gradient at layer4's output.
    for (int l = 3; l >= 0; --l) {
      if (l < 3) add_inplace(g, feature_grads[l + 1]);
      for (int b = 1; b >= 0; --b) g = block_backward(layers[l][b], t.layers[l][b], g);
    }
    g = max_pool_backward(t.pool, g, t.stem.height, t.stem.width);
    add_inplace(g, feature_grads[0]);
    relu_backward_inplace(g, t.stem);
    g = conv2d_backward(t.input, stem, geo(2, 3), g, nullptr, true);
    for (auto& v : g.data) v /= T(0.225);
    return g;
  }
};

template <typename T>
MonodepthDepth<T>::MonodepthDepth() = default;
template <typename T>
MonodepthDepth<T>::MonodepthDepth(MonodepthDepth&&) noexcept = default;
template <typename T>
MonodepthDepth<T>& MonodepthDepth<T>::operator=(MonodepthDepth&&) noexcept = default;
template <typename T>
MonodepthDepth<T>::~MonodepthDepth() = default;

template <typename T>
MonodepthDepth<T> MonodepthDepth<T>::from_archive(const Archive& a) {
  auto net = std::make_unique<Network>();
  net->feed_h = static_cast<int>(a.get("feed_height").as_i64().at(0));
  net->feed_w = static_cast<int>(a.get("feed_width").as_i64().at(0));
  if (net->feed_h % 32 != 0 || net->feed_w % 32 != 0 || net->feed_h <= 0 || net->feed_w <= 0) {
    fail(ErrorCode::checkpoint_format, "feed resolution must be a positive multiple of 32");
  }
  net->stem = load_conv<T>(a, "encoder.conv1", false);
  fold_batch_norm(a, "encoder.bn1", net->stem);
  for (int l = 0; l < 4; ++l) {
    for (int b = 0; b < 2; ++b) {
      const std::string p = "encoder.layer" + std::to_string(l + 1) + "." + std::to_string(b);
      auto& blk = net->layers[l][b];
      blk.stride = (l > 0 && b == 0) ? 2 : 1;
      blk.conv1 = load_conv<T>(a, p + ".conv1", false);
      fold_batch_norm(a, p + ".bn1", blk.conv1);
      blk.conv2 = load_conv<T>(a, p + ".conv2", false);
      fold_batch_norm(a, p + ".bn2", blk.conv2);
      if (a.contains(p + ".downsample.0.weight")) {
        blk.downsample = load_conv<T>(a, p + ".downsample.0", false);
        fold_batch_norm(a, p + ".downsample.1", *blk.downsample);
      }
    }
  }
  // Decoder module list order: upconv(4,0), upconv(4,1), ..., upconv(0,1), dispconv(0).
  int idx = 0;
  for (int i = 4; i >= 0; --i) {
    net->upconv0[i] = load_conv<T>(a, "decoder." + std::to_string(idx++) + ".conv.conv", true);
    net->upconv1[i] = load_conv<T>(a, "decoder." + std::to_string(idx++) + ".conv.conv", true);
    const int in0 = i == 4 ? kEncChannels[4] : kDecChannels[i + 1];
    const int in1 = kDecChannels[i] + (i > 0 ? kEncChannels[i - 1] : 0);
    if (net->upconv0[i].in_channels != in0 || net->upconv0[i].out_channels != kDecChannels[i] ||
        net->upconv1[i].in_channels != in1 || net->upconv1[i].out_channels != kDecChannels[i]) {
      fail(ErrorCode::checkpoint_format, "unexpected depth decoder layout at scale " + std::to_string(i));
    }
  }
  net->dispconv = load_conv<T>(a, "decoder." + std::to_string(idx) + ".conv", true);
  MonodepthDepth m;
  m.net_ = std::move(net);
  return m;
}

template <typename T>
MonodepthDepth<T> MonodepthDepth<T>::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::backend_unavailable, "monodepth weights not found: " + path.string());
  }
  return from_archive(Archive::load(path));
}

template <typename T>
int MonodepthDepth<T>::feed_height() const { return net_->feed_h; }
template <typename T>
int MonodepthDepth<T>::feed_width() const { return net_->feed_w; }

namespace {

// Maps sigmoid disparity to depth the way the upstream release does.
template <typename T>
Tensor<T> disp_to_depth(const Tensor<T>& disp) {
  const T lo = T(1.0 / kMaxDepth);
  const T hi = T(1.0 / kMinDepth);
  Tensor<T> depth(disp.channels, disp.height, disp.width);
  for (std::size_t i = 0; i < disp.size(); ++i) depth.data[i] = T{1} / (lo + (hi - lo) * disp.data[i]);
  return depth;
}

}  // namespace

template <typename T>
Tensor<T> MonodepthDepth<T>::estimate(const Tensor<T>& rgb) const {
  typename Network::Tape tape;
  const Tensor<T> feed = resize_bilinear(rgb, net_->feed_h, net_->feed_w);
  const Tensor<T> disp = resize_bilinear(net_->forward(feed, tape), rgb.height, rgb.width);
  return minmax_normalize(disp_to_depth(disp));
}

template <typename T>
Tensor<T> MonodepthDepth<T>::backward(const Tensor<T>& rgb, const Tensor<T>& grad_map) const {
  typename Network::Tape tape;
  const Tensor<T> feed = resize_bilinear(rgb, net_->feed_h, net_->feed_w);
  const Tensor<T> disp = resize_bilinear(net_->forward(feed, tape), rgb.height, rgb.width);
  const Tensor<T> depth = disp_to_depth(disp);
  Tensor<T> g = minmax_normalize_backward(depth, grad_map);
  const T lo = T(1.0 / kMaxDepth);
  const T hi = T(1.0 / kMinDepth);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T s = lo + (hi - lo) * disp.data[i];
    g.data[i] *= -(hi - lo) / (s * s);
  }
  g = resize_bilinear_backward(g, net_->feed_h, net_->feed_w);
  g = net_->backward(tape, std::move(g));
  return resize_bilinear_backward(g, rgb.height, rgb.width);
}

template class MonodepthDepth<float>;
template class MonodepthDepth<double>;

template <typename T>
std::unique_ptr<DepthEstimator<T>> make_depth_estimator(const DepthBackend& backend) {
  if (backend.kind == DepthKind::analytic_stub) return std::make_unique<StubDepth<T>>();
  const auto path = resolve_weights(backend.weights_path, "monodepth2.ld");
  return std::make_unique<MonodepthDepth<T>>(MonodepthDepth<T>::load(path));
}

template std::unique_ptr<DepthEstimator<float>> make_depth_estimator(const DepthBackend&);
template std::unique_ptr<DepthEstimator<double>> make_depth_estimator(const DepthBackend&);

GrayMap estimate_depth(const DepthEstimator<float>& estimator, const Image& img) {
  return {estimator.estimate(img.tensor()), MapKind::depth, estimator.name()};
}

Archive random_monodepth_archive(int feed_height, int feed_width, std::uint64_t seed) {
  Archive a;
  std::mt19937_64 rng(seed);
  auto conv = [&](const std::string& name, int out, int in, int k, bool bias) {
    std::vector<float> w(static_cast<std::size_t>(out) * in * k * k);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in * k * k)));
    for (auto& v : w) v = static_cast<float>(dist(rng));
    a.put_f32(name + ".weight", w, {out, in, k, k});
    if (bias) {
      std::vector<float> b(out);
      std::uniform_real_distribution<double> u(-0.1, 0.1);
      for (auto& v : b) v = static_cast<float>(u(rng));
      a.put_f32(name + ".bias", b, {out});
    }
  };
  auto bn = [&](const std::string& name, int c) {
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::uniform_real_distribution<double> s(-0.1, 0.1);
    std::vector<float> gamma(c), beta(c), mean(c), var(c);
    for (int i = 0; i < c; ++i) {
      gamma[i] = static_cast<float>(u(rng));
      beta[i] = static_cast<float>(s(rng));
      mean[i] = static_cast<float>(s(rng));
      var[i] = static_cast<float>(u(rng));
    }
    a.put_f32(name + ".weight", gamma, {c});
    a.put_f32(name + ".bias", beta, {c});
    a.put_f32(name + ".running_mean", mean, {c});
    a.put_f32(name + ".running_var", var, {c});
  };
  conv("encoder.conv1", 64, 3, 7, false);
  bn("encoder.bn1", 64);
  int in = 64;
  for (int l = 0; l < 4; ++l) {
    const int out = kEncChannels[l + 1];
    for (int b = 0; b < 2; ++b) {
      const std::string p = "encoder.layer" + std::to_string(l + 1) + "." + std::to_string(b);
      conv(p + ".conv1", out, b == 0 ? in : out, 3, false);
      bn(p + ".bn1", out);
      conv(p + ".conv2", out, out, 3, false);
      bn(p + ".bn2", out);
      if (l > 0 && b == 0) {
        conv(p + ".downsample.0", out, in, 1, false);
        bn(p + ".downsample.1", out);
      }
    }
    in = out;
  }
  int idx = 0;
  for (int i = 4; i >= 0; --i) {
    const int in0 = i == 4 ? kEncChannels[4] : kDecChannels[i + 1];
    const int in1 = kDecChannels[i] + (i > 0 ? kEncChannels[i - 1] : 0);
    conv("decoder." + std::to_string(idx++) + ".conv.conv", kDecChannels[i], in0, 3, true);
    conv("decoder." + std::to_string(idx++) + ".conv.conv", kDecChannels[i], in1, 3, true);
  }
  conv("decoder." + std::to_string(idx) + ".conv", 1, kDecChannels[0], 3, true);
  const std::int64_t fh = feed_height;
  const std::int64_t fw = feed_width;
  a.put_i64("feed_height", std::span<const std::int64_t>(&fh, 1), {1});
  a.put_i64("feed_width", std::span<const std::int64_t>(&fw, 1), {1});
  a.text = "kind=monodepth\nsource=random\n";
  return a;
}

}  // namespace ldst
