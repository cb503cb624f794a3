#include "core/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ldst {

const char* layer_name(Layer layer) {
  switch (layer) {
    case Layer::relu1_1: return "relu1_1";
    case Layer::relu2_1: return "relu2_1";
    case Layer::relu3_1: return "relu3_1";
    case Layer::relu4_1: return "relu4_1";
    case Layer::relu5_1: return "relu5_1";
  }
  return "?";
}

Layer parse_layer(const std::string& name) {
  for (Layer l : {Layer::relu1_1, Layer::relu2_1, Layer::relu3_1, Layer::relu4_1, Layer::relu5_1})
    if (name == layer_name(l)) return l;
  fail(ErrorCode::argument, "unknown encoder layer: " + name);
}

template <typename T>
const Tensor<T>& FeatureBundle<T>::at(Layer l) const {
  auto it = maps.find(l);
  if (it == maps.end()) fail(ErrorCode::argument, std::string("feature bundle lacks ") + layer_name(l));
  return it->second;
}

template <typename T>
Tensor<T>& FeatureBundle<T>::at(Layer l) {
  auto it = maps.find(l);
  if (it == maps.end()) fail(ErrorCode::argument, std::string("feature bundle lacks ") + layer_name(l));
  return it->second;
}

template struct FeatureBundle<float>;
template struct FeatureBundle<double>;

namespace {

struct Op {
  bool pool;
  int conv;  // conv index when !pool
};

// conv1_1 conv1_2 pool conv2_1 conv2_2 pool conv3_1..3_4 pool conv4_1..4_4 pool conv5_1
constexpr std::array<Op, 17> kOps{{{false, 0}, {false, 1}, {true, -1}, {false, 2}, {false, 3},
                                    {true, -1}, {false, 4}, {false, 5}, {false, 6}, {false, 7},
                                    {true, -1}, {false, 8}, {false, 9}, {false, 10}, {false, 11},
                                    {true, -1}, {false, 12}}};

int layer_op(Layer l) {
  switch (l) {
    case Layer::relu1_1: return 0;
    case Layer::relu2_1: return 3;
    case Layer::relu3_1: return 6;
    case Layer::relu4_1: return 11;
    case Layer::relu5_1: return 16;
  }
  return -1;
}

constexpr std::array<int, 13> kStandardWidths{64, 64, 128, 128, 256, 256, 256, 256,
                                              512, 512, 512, 512, 512};
constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

const ConvGeometry kVggGeometry{1, 1, PadMode::zero};

}  // namespace

template <typename T>
const std::array<const char*, Encoder<T>::kConvCount>& Encoder<T>::conv_names() {
  static const std::array<const char*, kConvCount> names{
      "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3",
      "conv3_4", "conv4_1", "conv4_2", "conv4_3", "conv4_4", "conv5_1"};
  return names;
}

template <typename T>
Encoder<T> Encoder<T>::from_archive(const Archive& archive, const std::string& prefix) {
  Encoder enc;
  int expected_in = 3;
  for (int i = 0; i < kConvCount; ++i) {
    const std::string name = prefix + conv_names()[i];
    const auto& w = archive.get(name + ".weight");
    const auto& b = archive.get(name + ".bias");
    if (w.shape.size() != 4 || w.shape[1] != expected_in || w.shape[2] != 3 || w.shape[3] != 3) {
      fail(ErrorCode::checkpoint_format, "bad shape for " + name + ".weight");
    }
    const int out = static_cast<int>(w.shape[0]);
    if (b.shape.size() != 1 || b.shape[0] != out) {
      fail(ErrorCode::checkpoint_format, "bad shape for " + name + ".bias");
    }
    ConvParams<T> p(out, expected_in, 3);
    const auto wv = w.as_f64();
    const auto bv = b.as_f64();
    std::transform(wv.begin(), wv.end(), p.weight.begin(), [](double v) { return static_cast<T>(v); });
    std::transform(bv.begin(), bv.end(), p.bias.begin(), [](double v) { return static_cast<T>(v); });
    enc.convs_[i] = std::move(p);
    expected_in = out;
  }
  const auto& mean = archive.get(prefix + "normalization.mean");
  const auto& sd = archive.get(prefix + "normalization.std");
  if (mean.element_count() != 3) fail(ErrorCode::checkpoint_format, "bad shape for normalization.mean");
  if (sd.element_count() != 3) fail(ErrorCode::checkpoint_format, "bad shape for normalization.std");
  const auto mv = mean.as_f64();
  const auto sv = sd.as_f64();
  for (int c = 0; c < 3; ++c) {
    enc.mean_[c] = static_cast<T>(mv[c]);
    enc.std_[c] = static_cast<T>(sv[c]);
    if (!(sv[c] > 0)) fail(ErrorCode::checkpoint_format, "normalization.std must be positive");
  }
  return enc;
}

template <typename T>
Encoder<T> Encoder<T>::load(const std::filesystem::path& path) {
  return from_archive(Archive::load(path));
}

template <typename T>
Encoder<T> Encoder<T>::random(int width_divisor, std::uint64_t seed) {
  require(width_divisor >= 1 && 64 % width_divisor == 0, ErrorCode::argument,
          "width divisor must divide 64");
  Encoder enc;
  std::mt19937_64 rng(seed);
  int in = 3;
  for (int i = 0; i < kConvCount; ++i) {
    const int out = kStandardWidths[i] / width_divisor;
    ConvParams<T> p(out, in, 3);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(p.fan_in())));
    for (auto& v : p.weight) v = static_cast<T>(dist(rng));
    enc.convs_[i] = std::move(p);
    in = out;
  }
  for (int c = 0; c < 3; ++c) {
    enc.mean_[c] = static_cast<T>(kImageNetMean[c]);
    enc.std_[c] = static_cast<T>(kImageNetStd[c]);
  }
  return enc;
}

template <typename T>
void Encoder<T>::write_to(Archive& archive, const std::string& prefix) const {
  for (int i = 0; i < kConvCount; ++i) {
    const auto& p = convs_[i];
    const std::string name = prefix + conv_names()[i];
    const auto w = p.template cast<float>();
    archive.put_f32(name + ".weight", w.weight, {p.out_channels, p.in_channels, 3, 3});
    archive.put_f32(name + ".bias", w.bias, {p.out_channels});
  }
  const std::array<float, 3> mean{static_cast<float>(mean_[0]), static_cast<float>(mean_[1]),
                                  static_cast<float>(mean_[2])};
  const std::array<float, 3> sd{static_cast<float>(std_[0]), static_cast<float>(std_[1]),
                                static_cast<float>(std_[2])};
  archive.put_f32(prefix + "normalization.mean", mean, {3});
  archive.put_f32(prefix + "normalization.std", sd, {3});
}

template <typename T>
int Encoder<T>::channels(Layer l) const {
  return convs_[kOps[layer_op(l)].conv].out_channels;
}

template <typename T>
FeatureBundle<T> Encoder<T>::extract(const Tensor<T>& image, std::span<const Layer> layers) const {
  Tape tape;
  return extract(image, layers, tape);
}

template <typename T>
FeatureBundle<T> Encoder<T>::extract(const Tensor<T>& image, std::span<const Layer> layers,
                                     Tape& tape) const {
  require(!layers.empty(), ErrorCode::argument, "extract_features: empty layer list");
  require(image.channels == 3, ErrorCode::dimension, "encoder input must have 3 channels");
  int deepest = -1;
  for (Layer l : layers) deepest = std::max(deepest, layer_op(l));

  FeatureBundle<T> bundle;
  const int ph = (image.height + 15) / 16 * 16;
  const int pw = (image.width + 15) / 16 * 16;
  bundle.pad_bottom = ph - image.height;
  bundle.pad_right = pw - image.width;

  Tensor<T> x = (ph == image.height && pw == image.width) ? image : pad_reflect(image, ph, pw);
  for (int c = 0; c < 3; ++c) {
    const T inv = T{1} / std_[c];
    for (auto& v : x.channel(c)) v = (v - mean_[c]) * inv;
  }

  tape = Tape{};
  tape.in_h = image.height;
  tape.in_w = image.width;
  tape.deepest_op = deepest;
  tape.activations.reserve(deepest + 2);
  tape.activations.push_back(std::move(x));
  for (int k = 0; k <= deepest; ++k) {
    const Tensor<T>& in = tape.activations.back();
    if (kOps[k].pool) {
      tape.pools.push_back(max_pool(in, 2, 2, 0));
      tape.activations.push_back(tape.pools.back().output);
    } else {
      Tensor<T> y = conv2d(in, convs_[kOps[k].conv], kVggGeometry);
      relu_inplace(y);
      tape.activations.push_back(std::move(y));
    }
  }
  for (Layer l : layers) bundle.maps[l] = tape.activations[layer_op(l) + 1];
  return bundle;
}

template <typename T>
Tensor<T> Encoder<T>::backward(const Tape& tape, const FeatureBundle<T>& grads) const {
  require(tape.deepest_op >= 0, ErrorCode::argument, "encoder backward without a forward tape");
  Tensor<T> grad;
  int pool_index = static_cast<int>(tape.pools.size()) - 1;
  for (int k = tape.deepest_op; k >= 0; --k) {
    for (const auto& [layer, g] : grads.maps) {
      if (layer_op(layer) != k) continue;
      if (grad.empty()) {
        grad = g;
      } else {
        add_inplace(grad, g);
      }
    }
    if (grad.empty()) continue;
    const Tensor<T>& input = tape.activations[k];
    if (kOps[k].pool) {
      grad = max_pool_backward(tape.pools[pool_index--], grad, input.height, input.width);
    } else {
      relu_backward_inplace(grad, tape.activations[k + 1]);
      grad = conv2d_backward(input, convs_[kOps[k].conv], kVggGeometry, grad, nullptr, true);
    }
  }
  if (grad.empty()) return Tensor<T>(3, tape.in_h, tape.in_w);
  for (int c = 0; c < 3; ++c) {
    const T inv = T{1} / std_[c];
    for (auto& v : grad.channel(c)) v *= inv;
  }
  if (grad.height == tape.in_h && grad.width == tape.in_w) return grad;
  return pad_reflect_backward(grad, tape.in_h, tape.in_w);
}

template <typename T>
template <typename U>
Encoder<U> Encoder<T>::cast() const {
  Encoder<U> out;
  for (int i = 0; i < kConvCount; ++i) out.convs_[i] = convs_[i].template cast<U>();
  for (int c = 0; c < 3; ++c) {
    out.mean_[c] = static_cast<U>(mean_[c]);
    out.std_[c] = static_cast<U>(std_[c]);
  }
  return out;
}

template class Encoder<float>;
template class Encoder<double>;
template Encoder<double> Encoder<float>::cast<double>() const;
template Encoder<float> Encoder<double>::cast<float>() const;
template Encoder<float> Encoder<float>::cast<float>() const;
template Encoder<double> Encoder<double>::cast<double>() const;

void write_random_encoder_archive(const std::filesystem::path& path, int width_divisor,
                                  std::uint64_t seed) {
  Archive a;
  Encoder<float>::random(width_divisor, seed).write_to(a);
  a.text = "kind=vgg19\nwidth_divisor=" + std::to_string(width_divisor) +
           "\nseed=" + std::to_string(seed) + "\n";
  a.save(path);
}

}  // namespace ldst
