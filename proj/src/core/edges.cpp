#include "core/edges.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "core/depth.hpp"
#include "core/nn_ops.hpp"

namespace ldst {

EdgeBackend parse_edge_backend(const std::string& name) {
  if (name == "sobel") return {EdgeKind::sobel, std::nullopt};
  if (name == "hed") return {EdgeKind::hed, std::nullopt};
  fail(ErrorCode::argument, "unknown edge backend '" + name + "' (expected hed or sobel)");
}

GrayMap SobelEdges::detect(const Image& img) const {
  const Tensor<float> lum = luminance(img.tensor());
  const int h = lum.height;
  const int w = lum.width;
  auto px = [&](int y, int x) {
    return static_cast<double>(lum.at(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)));
  };
  GrayMap out{Tensor<float>(1, h, w), MapKind::edge, name()};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      out.values.at(0, y, x) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  }
  const float mx = *std::max_element(out.values.data.begin(), out.values.data.end());
  if (mx > 0) {
    for (auto& v : out.values.data) v /= mx;
  }
  return out;
}

namespace {

constexpr std::array<const char*, 13> kHedConvs{"conv1_1", "conv1_2", "conv2_1", "conv2_2",
                                                 "conv3_1", "conv3_2", "conv3_3", "conv4_1",
                                                 "conv4_2", "conv4_3", "conv5_1", "conv5_2",
                                                 "conv5_3"};
// Index of the last conv of each stage; a side output taps its activation.
constexpr std::array<int, 5> kStageEnds{1, 3, 6, 9, 12};
constexpr std::array<int, 13> kHedWidths{64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};

ConvParams<float> read_conv(const Archive& a, const std::string& name) {
  const auto& w = a.get(name + ".weight");
  const auto& b = a.get(name + ".bias");
  if (w.shape.size() != 4 || b.element_count() != w.shape[0]) {
    fail(ErrorCode::checkpoint_format, "bad shape for " + name);
  }
  ConvParams<float> p(static_cast<int>(w.shape[0]), static_cast<int>(w.shape[1]),
                      static_cast<int>(w.shape[2]));
  p.weight = w.as_f32();
  p.bias = b.as_f32();
  return p;
}

}  // namespace

struct HedEdges::Network {
  std::array<ConvParams<float>, 13> convs;
  std::array<ConvParams<float>, 5> side;
  ConvParams<float> fuse;
  std::array<float, 3> mean{};
  std::array<float, 3> stddev{};
};

HedEdges::HedEdges() = default;
HedEdges::HedEdges(HedEdges&&) noexcept = default;
HedEdges& HedEdges::operator=(HedEdges&&) noexcept = default;
HedEdges::~HedEdges() = default;

HedEdges HedEdges::from_archive(const Archive& a) {
  auto net = std::make_unique<Network>();
  int in = 3;
  for (int i = 0; i < 13; ++i) {
    net->convs[i] = read_conv(a, kHedConvs[i]);
    if (net->convs[i].in_channels != in || net->convs[i].kernel != 3) {
      fail(ErrorCode::checkpoint_format, std::string("bad shape for ") + kHedConvs[i]);
    }
    in = net->convs[i].out_channels;
  }
  for (int s = 0; s < 5; ++s) {
    net->side[s] = read_conv(a, "score_dsn" + std::to_string(s + 1));
    if (net->side[s].in_channels != net->convs[kStageEnds[s]].out_channels) {
      fail(ErrorCode::checkpoint_format, "bad shape for score_dsn" + std::to_string(s + 1));
    }
  }
  net->fuse = read_conv(a, "score_fuse");
  if (net->fuse.in_channels != 5 || net->fuse.out_channels != 1) {
    fail(ErrorCode::checkpoint_format, "bad shape for score_fuse");
  }
  const auto mean = a.get("normalization.mean").as_f32();
  const auto sd = a.get("normalization.std").as_f32();
  if (mean.size() != 3 || sd.size() != 3) fail(ErrorCode::checkpoint_format, "bad normalization");
  std::copy(mean.begin(), mean.end(), net->mean.begin());
  std::copy(sd.begin(), sd.end(), net->stddev.begin());
  HedEdges h;
  h.net_ = std::move(net);
  return h;
}

HedEdges HedEdges::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::backend_unavailable, "edge model weights not found: " + path.string());
  }
  return from_archive(Archive::load(path));
}

GrayMap HedEdges::detect(const Image& img) const {
  const ConvGeometry same{1, 1, PadMode::zero};
  Tensor<float> x = img.tensor();
  for (int c = 0; c < 3; ++c)
    for (auto& v : x.channel(c)) v = (v - net_->mean[c]) / net_->stddev[c];
  Tensor<float> stacked(5, img.height(), img.width());
  int stage = 0;
  for (int i = 0; i < 13; ++i) {
    x = conv2d(x, net_->convs[i], same);
    relu_inplace(x);
    if (i == kStageEnds[stage]) {
      const Tensor<float> score = conv2d(x, net_->side[stage], {1, 0, PadMode::zero});
      const Tensor<float> up = resize_bilinear(score, img.height(), img.width());
      std::copy(up.data.begin(), up.data.end(), stacked.channel(stage).begin());
      ++stage;
      if (stage < 5) x = max_pool(x, 2, 2, 0).output;
    }
  }
  Tensor<float> fused = conv2d(stacked, net_->fuse, {1, 0, PadMode::zero});
  sigmoid_inplace(fused);
  return {std::move(fused), MapKind::edge, name()};
}

std::unique_ptr<EdgeDetector> make_edge_detector(const EdgeBackend& backend) {
  if (backend.kind == EdgeKind::sobel) return std::make_unique<SobelEdges>();
  return std::make_unique<HedEdges>(HedEdges::load(resolve_weights(backend.weights_path, "hed.ld")));
}

Archive random_hed_archive(int width_divisor, std::uint64_t seed) {
  Archive a;
  std::mt19937_64 rng(seed);
  auto conv = [&](const std::string& name, int out, int in, int k) {
    std::vector<float> w(static_cast<std::size_t>(out) * in * k * k);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in * k * k)));
    for (auto& v : w) v = static_cast<float>(dist(rng));
    std::vector<float> b(out, 0.0f);
    a.put_f32(name + ".weight", w, {out, in, k, k});
    a.put_f32(name + ".bias", b, {out});
  };
  int in = 3;
  for (int i = 0; i < 13; ++i) {
    const int out = kHedWidths[i] / width_divisor;
    conv(kHedConvs[i], out, in, 3);
    in = out;
  }
  for (int s = 0; s < 5; ++s) conv("score_dsn" + std::to_string(s + 1), 1, kHedWidths[kStageEnds[s]] / width_divisor, 1);
  conv("score_fuse", 1, 5, 1);
  const std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  const std::array<float, 3> sd{0.229f, 0.224f, 0.225f};
  a.put_f32("normalization.mean", mean, {3});
  a.put_f32("normalization.std", sd, {3});
  a.text = "kind=hed\nsource=random\n";
  return a;
}

}  // namespace ldst
