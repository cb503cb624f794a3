#include "core/transfer_net.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ldst {
namespace {

const ConvGeometry kPointwise{1, 0, PadMode::zero};
const ConvGeometry kReflect3x3{1, 1, PadMode::reflect};

// Decoder layout mirroring VGG from relu4_1: -1 marks a nearest x2 upsample.
constexpr std::array<int, 12> kDecoderOps{0, -1, 1, 2, 3, 4, -1, 5, 6, -1, 7, 8};
constexpr int kDecoderConvs = 9;

}  // namespace

template <typename T>
Tensor<T> sanet_forward(const SanetBlock<T>& block, const Tensor<T>& content,
                        const Tensor<T>& style, SanetTape<T>* tape) {
  if (content.channels != style.channels || content.channels != block.channels()) {
    fail(ErrorCode::dimension, "sanet: channel mismatch (content " + std::to_string(content.channels) +
                                   ", style " + std::to_string(style.channels) + ", block " +
                                   std::to_string(block.channels()) + ")");
  }
  SanetTape<T> local;
  SanetTape<T>& t = tape ? *tape : local;
  t.norm_content = mean_variance_norm(content, static_cast<T>(kSanetNormEps));
  t.norm_style = mean_variance_norm(style, static_cast<T>(kSanetNormEps));
  t.query = conv2d(t.norm_content, block.f, kPointwise);
  t.key = conv2d(t.norm_style, block.g, kPointwise);
  t.value = conv2d(style, block.h, kPointwise);
  if (tape) t.style = style;
  t.attended = attention_forward(t.query, t.key, t.value, t.attention);
  return t.attended;
}

template <typename T>
Tensor<T> fuse_residual(const SanetBlock<T>& block, const Tensor<T>& content,
                        const Tensor<T>& attended) {
  require_same_shape(content, attended, "fuse_residual");
  Tensor<T> out = conv2d(attended, block.out, kPointwise);
  add_inplace(out, content);
  return out;
}

template <typename T>
Tensor<T> fuse_multiscale(const ConvParams<T>& fusion, const Tensor<T>& f4, const Tensor<T>& f5,
                          Tensor<T>* sum_out) {
  require(f4.channels == f5.channels, ErrorCode::dimension, "fuse_multiscale: channel mismatch");
  Tensor<T> sum = resize_nearest(f5, f4.height, f4.width);
  add_inplace(sum, f4);
  Tensor<T> out = conv2d(sum, fusion, kReflect3x3);
  if (sum_out) *sum_out = std::move(sum);
  return out;
}

template <typename T>
TransferModel<T> TransferModel<T>::shaped_for(int c1, int c2, int c3, int c4) {
  TransferModel m;
  m.sanet4 = SanetBlock<T>(c4);
  m.sanet5 = SanetBlock<T>(c4);
  m.fusion = ConvParams<T>(c4, c4, 3);
  const std::array<std::pair<int, int>, kDecoderConvs> io{
      {{c4, c3}, {c3, c3}, {c3, c3}, {c3, c3}, {c3, c2}, {c2, c2}, {c2, c1}, {c1, c1}, {c1, 3}}};
  for (auto [in, out] : io) m.decoder.emplace_back(out, in, 3);
  return m;
}

template <typename T>
void TransferModel<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, p] : parameters()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p->fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p->weight) v = static_cast<T>(dist(rng));
    for (auto& v : p->bias) v = static_cast<T>(dist(rng));
  }
}

template <typename T>
TransferModel<T> TransferModel<T>::zeros_like() const {
  TransferModel z = *this;
  for (auto& [name, p] : z.parameters()) {
    std::fill(p->weight.begin(), p->weight.end(), T{0});
    std::fill(p->bias.begin(), p->bias.end(), T{0});
  }
  return z;
}

template <typename T>
std::vector<std::pair<std::string, ConvParams<T>*>> TransferModel<T>::parameters() {
  std::vector<std::pair<std::string, ConvParams<T>*>> out;
  for (auto [prefix, block] : {std::pair{"sanet4", &sanet4}, std::pair{"sanet5", &sanet5}}) {
    const std::string p = prefix;
    out.emplace_back(p + ".f", &block->f);
    out.emplace_back(p + ".g", &block->g);
    out.emplace_back(p + ".h", &block->h);
    out.emplace_back(p + ".out", &block->out);
  }
  out.emplace_back("fusion", &fusion);
  for (std::size_t i = 0; i < decoder.size(); ++i)
    out.emplace_back("decoder." + std::to_string(i), &decoder[i]);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const ConvParams<T>*>> TransferModel<T>::parameters() const {
  auto mut = const_cast<TransferModel*>(this)->parameters();
  std::vector<std::pair<std::string, const ConvParams<T>*>> out;
  for (auto& [n, p] : mut) out.emplace_back(n, p);
  return out;
}

template <typename T>
Tensor<T> TransferModel<T>::fuse(const FeatureBundle<T>& content, const FeatureBundle<T>& style,
                                 ForwardTape<T>* tape) const {
  const auto& c4 = content.at(Layer::relu4_1);
  const auto& c5 = content.at(Layer::relu5_1);
  const auto& s4 = style.at(Layer::relu4_1);
  const auto& s5 = style.at(Layer::relu5_1);
  const Tensor<T> a4 = sanet_forward(sanet4, c4, s4, tape ? &tape->sanet4 : nullptr);
  const Tensor<T> a5 = sanet_forward(sanet5, c5, s5, tape ? &tape->sanet5 : nullptr);
  const Tensor<T> f4 = fuse_residual(sanet4, c4, a4);
  const Tensor<T> f5 = fuse_residual(sanet5, c5, a5);
  if (tape) {
    tape->f5_h = f5.height;
    tape->f5_w = f5.width;
  }
  return fuse_multiscale(fusion, f4, f5, tape ? &tape->sum : nullptr);
}

template <typename T>
Tensor<T> TransferModel<T>::decode_raw(const Tensor<T>& fused, DecoderTape<T>* tape) const {
  if (fused.channels != decoder.front().in_channels) {
    fail(ErrorCode::dimension, "decoder expects " + std::to_string(decoder.front().in_channels) +
                                   " channels, got " + std::to_string(fused.channels));
  }
  Tensor<T> x = fused;
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(x);
  }
  for (int op : kDecoderOps) {
    if (op < 0) {
      x = resize_nearest(x, x.height * 2, x.width * 2);
    } else {
      x = conv2d(x, decoder[op], kReflect3x3);
      if (op + 1 < kDecoderConvs) relu_inplace(x);
    }
    if (tape) tape->activations.push_back(x);
  }
  return x;
}

template <typename T>
Tensor<T> TransferModel<T>::decoder_backward(const DecoderTape<T>& tape,
                                             const Tensor<T>& grad_output,
                                             TransferModel& grads) const {
  Tensor<T> grad = grad_output;
  for (int k = static_cast<int>(kDecoderOps.size()) - 1; k >= 0; --k) {
    const int op = kDecoderOps[k];
    const Tensor<T>& input = tape.activations[k];
    if (op < 0) {
      grad = resize_nearest_backward(grad, input.height, input.width);
    } else {
      if (op + 1 < kDecoderConvs) relu_backward_inplace(grad, tape.activations[k + 1]);
      grad = conv2d_backward(input, decoder[op], kReflect3x3, grad, &grads.decoder[op], true);
    }
  }
  return grad;
}

template <typename T>
void TransferModel<T>::fuse_backward(const ForwardTape<T>& tape, const Tensor<T>& grad_fused,
                                     TransferModel& grads) const {
  const Tensor<T> grad_sum =
      conv2d_backward(tape.sum, fusion, kReflect3x3, grad_fused, &grads.fusion, true);
  const Tensor<T> grad_f5 = resize_nearest_backward(grad_sum, tape.f5_h, tape.f5_w);
  auto block_backward = [](const SanetBlock<T>& block, const SanetTape<T>& t,
                           const Tensor<T>& grad_out, SanetBlock<T>& g) {
    const Tensor<T> grad_att = conv2d_backward(t.attended, block.out, kPointwise, grad_out, &g.out, true);
    const auto ga = attention_backward(t.query, t.key, t.value, t.attention, grad_att);
    conv2d_backward(t.norm_content, block.f, kPointwise, ga.query, &g.f, false);
    conv2d_backward(t.norm_style, block.g, kPointwise, ga.key, &g.g, false);
    conv2d_backward(t.style, block.h, kPointwise, ga.value, &g.h, false);
  };
  block_backward(sanet4, tape.sanet4, grad_sum, grads.sanet4);
  block_backward(sanet5, tape.sanet5, grad_f5, grads.sanet5);
}

template <typename T>
void TransferModel<T>::write_to(Archive& archive, const std::string& prefix) const {
  for (const auto& [name, p] : parameters()) {
    const auto f = p->template cast<float>();
    archive.put_f32(prefix + name + ".weight", f.weight,
                    {p->out_channels, p->in_channels, p->kernel, p->kernel});
    archive.put_f32(prefix + name + ".bias", f.bias, {p->out_channels});
  }
  const std::int64_t v = version;
  archive.put_i64(prefix + "model.version", std::span<const std::int64_t>(&v, 1), {1});
}

template <typename T>
TransferModel<T> TransferModel<T>::from_archive(const Archive& archive, const std::string& prefix) {
  const auto version = archive.get(prefix + "model.version").as_i64();
  if (version.size() != 1 || version[0] != kModelVersion) {
    fail(ErrorCode::checkpoint_format, "unsupported model.version");
  }
  const auto& fw = archive.get(prefix + "fusion.weight");
  const auto& d0 = archive.get(prefix + "decoder.0.weight");
  const auto& d4 = archive.get(prefix + "decoder.4.weight");
  const auto& d6 = archive.get(prefix + "decoder.6.weight");
  if (fw.shape.size() != 4 || d0.shape.size() != 4 || d4.shape.size() != 4 || d6.shape.size() != 4) {
    fail(ErrorCode::checkpoint_format, "malformed transfer model tensors");
  }
  TransferModel m = shaped_for(static_cast<int>(d6.shape[0]), static_cast<int>(d4.shape[0]),
                               static_cast<int>(d0.shape[0]), static_cast<int>(fw.shape[0]));
  for (auto& [name, p] : m.parameters()) {
    const auto& w = archive.get(prefix + name + ".weight");
    const auto& b = archive.get(prefix + name + ".bias");
    const std::vector<std::int64_t> expect{p->out_channels, p->in_channels, p->kernel, p->kernel};
    if (w.shape != expect) fail(ErrorCode::checkpoint_format, "bad shape for " + name + ".weight");
    if (b.shape != std::vector<std::int64_t>{p->out_channels}) {
      fail(ErrorCode::checkpoint_format, "bad shape for " + name + ".bias");
    }
    const auto wv = w.as_f64();
    const auto bv = b.as_f64();
    std::transform(wv.begin(), wv.end(), p->weight.begin(), [](double v) { return static_cast<T>(v); });
    std::transform(bv.begin(), bv.end(), p->bias.begin(), [](double v) { return static_cast<T>(v); });
  }
  return m;
}

template <typename T>
template <typename U>
TransferModel<U> TransferModel<T>::cast() const {
  TransferModel<U> out;
  auto convert_block = [](const SanetBlock<T>& b) {
    SanetBlock<U> o;
    o.f = b.f.template cast<U>();
    o.g = b.g.template cast<U>();
    o.h = b.h.template cast<U>();
    o.out = b.out.template cast<U>();
    return o;
  };
  out.sanet4 = convert_block(sanet4);
  out.sanet5 = convert_block(sanet5);
  out.fusion = fusion.template cast<U>();
  for (const auto& d : decoder) out.decoder.push_back(d.template cast<U>());
  out.version = version;
  return out;
}

#define LDST_INSTANTIATE(T)                                                                  \
  template Tensor<T> sanet_forward(const SanetBlock<T>&, const Tensor<T>&, const Tensor<T>&, \
                                   SanetTape<T>*);                                           \
  template Tensor<T> fuse_residual(const SanetBlock<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> fuse_multiscale(const ConvParams<T>&, const Tensor<T>&, const Tensor<T>&, \
                                     Tensor<T>*);                                            \
  template class TransferModel<T>;

LDST_INSTANTIATE(float)
LDST_INSTANTIATE(double)
#undef LDST_INSTANTIATE

template TransferModel<double> TransferModel<float>::cast<double>() const;
template TransferModel<float> TransferModel<double>::cast<float>() const;

Image decode(const TransferModel<float>& model, const Tensor<float>& fused) {
  Tensor<float> raw = model.decode_raw(fused);
  for (auto& v : raw.data) v = std::clamp(v, 0.0f, 1.0f);
  return Image(std::move(raw));
}

FusedFeatures fused_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                             const Image& content, const Image& style) {
  const auto fc = encoder.extract(content.tensor(), kContentLayers);
  const auto fs = encoder.extract(style.tensor(), kContentLayers);
  return {model.fuse(fc, fs), content.height(), content.width()};
}

Image decode_to_content(const TransferModel<float>& model, const FusedFeatures& features) {
  Image full = decode(model, features.fused);
  if (full.height() == features.content_h && full.width() == features.content_w) return full;
  return Image(crop(full.tensor(), features.content_h, features.content_w));
}

Image stylize(const TransferModel<float>& model, const Encoder<float>& encoder,
              const Image& content, const Image& style) {
  return decode_to_content(model, fused_features(model, encoder, content, style));
}

}  // namespace ldst
