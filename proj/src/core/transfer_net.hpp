#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/archive.hpp"
#include "core/encoder.hpp"
#include "core/imaging.hpp"
#include "core/nn_ops.hpp"

namespace ldst {

inline constexpr std::int64_t kModelVersion = 1;

// Style-attention block: query/key/value 1x1 projections plus the 1x1
// output projection used by the residual fusion.
template <typename T>
struct SanetBlock {
  ConvParams<T> f;
  ConvParams<T> g;
  ConvParams<T> h;
  ConvParams<T> out;

  SanetBlock() = default;
  explicit SanetBlock(int channels)
      : f(channels, channels, 1), g(channels, channels, 1), h(channels, channels, 1),
        out(channels, channels, 1) {}
  int channels() const { return f.in_channels; }
};

template <typename T>
struct SanetTape {
  Tensor<T> norm_content;
  Tensor<T> norm_style;
  Tensor<T> style;
  Tensor<T> query;
  Tensor<T> key;
  Tensor<T> value;
  std::vector<T> attention;  // content positions x style positions
  Tensor<T> attended;
};

inline constexpr double kSanetNormEps = 1e-5;

// Attention output (before the 1x1 output projection), at content resolution.
template <typename T>
Tensor<T> sanet_forward(const SanetBlock<T>& block, const Tensor<T>& content,
                        const Tensor<T>& style, SanetTape<T>* tape = nullptr);

// content + out_conv(attended)
template <typename T>
Tensor<T> fuse_residual(const SanetBlock<T>& block, const Tensor<T>& content,
                        const Tensor<T>& attended);

// fusion_conv(f4 + nearest_upsample(f5)); 3x3 reflect-padded.
template <typename T>
Tensor<T> fuse_multiscale(const ConvParams<T>& fusion, const Tensor<T>& f4, const Tensor<T>& f5,
                          Tensor<T>* sum_out = nullptr);

template <typename T>
struct DecoderTape {
  std::vector<Tensor<T>> activations;
};

template <typename T>
struct ForwardTape {
  SanetTape<T> sanet4;
  SanetTape<T> sanet5;
  Tensor<T> sum;  // fusion conv input
  int f5_h = 0;
  int f5_w = 0;
  DecoderTape<T> decoder;
};

template <typename T>
class TransferModel {
 public:
  SanetBlock<T> sanet4;
  SanetBlock<T> sanet5;
  ConvParams<T> fusion;
  std::vector<ConvParams<T>> decoder;
  std::int64_t version = kModelVersion;

  TransferModel() = default;
  // Zero-valued model shaped for the given encoder widths.
  static TransferModel shaped_for(int c1, int c2, int c3, int c4);
  template <typename E>
  static TransferModel shaped_for(const Encoder<E>& enc) {
    return shaped_for(enc.channels(Layer::relu1_1), enc.channels(Layer::relu2_1),
                      enc.channels(Layer::relu3_1), enc.channels(Layer::relu4_1));
  }
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) on every weight and bias.
  void initialize(std::uint64_t seed);
  TransferModel zeros_like() const;

  std::vector<std::pair<std::string, ConvParams<T>*>> parameters();
  std::vector<std::pair<std::string, const ConvParams<T>*>> parameters() const;

  // F''_cs from encoder bundles holding relu4_1 and relu5_1.
  Tensor<T> fuse(const FeatureBundle<T>& content, const FeatureBundle<T>& style,
                 ForwardTape<T>* tape = nullptr) const;
  // Unclamped decoder output (3 x 8H x 8W).
  Tensor<T> decode_raw(const Tensor<T>& fused, DecoderTape<T>* tape = nullptr) const;

  // Accumulates parameter gradients into `grads`; returns d/d(fused).
  Tensor<T> decoder_backward(const DecoderTape<T>& tape, const Tensor<T>& grad_output,
                             TransferModel& grads) const;
  void fuse_backward(const ForwardTape<T>& tape, const Tensor<T>& grad_fused,
                     TransferModel& grads) const;

  void write_to(Archive& archive, const std::string& prefix = "") const;
  static TransferModel from_archive(const Archive& archive, const std::string& prefix = "");

  template <typename U>
  TransferModel<U> cast() const;
};

// Clamped, 8x upsampled image from a fused feature.
Image decode(const TransferModel<float>& model, const Tensor<float>& fused);

// Fused decoder input for (content, style); content padding is recorded so
// the decoded image can be cropped back.
struct FusedFeatures {
  Tensor<float> fused;
  int content_h = 0;
  int content_w = 0;
};

FusedFeatures fused_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                             const Image& content, const Image& style);
// Decodes and crops back to the content size.
Image decode_to_content(const TransferModel<float>& model, const FusedFeatures& features);

Image stylize(const TransferModel<float>& model, const Encoder<float>& encoder,
              const Image& content, const Image& style);

}  // namespace ldst
