#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/encoder.hpp"
#include "core/imaging.hpp"
#include "core/transfer_net.hpp"

namespace ldst {

using ControlWarning = std::function<void(const std::string&)>;

// Clamps to [0,1]; non-finite alpha is an argument error.
double clamp_alpha(double alpha, const ControlWarning& warn = {});

// Decoder input for the content-style trade-off:
// (1 - alpha) * F(c, c) + alpha * F(c, s). alpha == 1 and alpha == 0 return
// the respective branch untouched.
FusedFeatures alpha_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                             const Image& content, const Image& style, double alpha,
                             const ControlWarning& warn = {});
Image stylize_with_alpha(const TransferModel<float>& model, const Encoder<float>& encoder,
                         const Image& content, const Image& style, double alpha,
                         const ControlWarning& warn = {});

struct StyleMix {
  std::vector<Image> styles;
  std::vector<double> weights;  // >= 0, normalised to sum 1
};

// Normalised copy of the weights; argument error when empty, mismatched,
// negative, non-finite or all zero.
std::vector<double> normalized_weights(const std::vector<double>& weights, std::size_t n_styles);

FusedFeatures multi_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                             const Image& content, const StyleMix& mix);
Image stylize_multi(const TransferModel<float>& model, const Encoder<float>& encoder,
                    const Image& content, const StyleMix& mix);

struct Region {
  Tensor<float> mask;  // 1 x H x W in [0,1], content resolution
  Image style;
};

// 8-bit grey PNG style mask (255 = full style) to a 1 x H x W map.
Tensor<float> mask_from_image(const Image& img);

// Area-average of a content-resolution mask down to the fused-feature grid;
// the mask is reflect-padded the same way the encoder pads the content.
Tensor<float> downsample_mask(const Tensor<float>& mask, int feature_h, int feature_w);

// sum_k M_k * F(c, s_k) + (1 - sum_k M_k) * F(c, c) at feature resolution.
FusedFeatures spatial_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                               const Image& content, const std::vector<Region>& regions,
                               const ControlWarning& warn = {});
Image stylize_spatial(const TransferModel<float>& model, const Encoder<float>& encoder,
                      const Image& content, const std::vector<Region>& regions,
                      const ControlWarning& warn = {});

// Everything a client can ask for in one call: a style mix (or masked
// regions indexing into it) blended with the reconstruction branch by alpha.
struct ControlRequest {
  StyleMix mix;
  double alpha = 1.0;
  std::vector<Tensor<float>> masks;
  std::vector<std::size_t> mask_styles;  // index into mix.styles per mask
};

FusedFeatures request_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                               const Image& content, const ControlRequest& request,
                               const ControlWarning& warn = {});
Image stylize_request(const TransferModel<float>& model, const Encoder<float>& encoder,
                      const Image& content, const ControlRequest& request,
                      const ControlWarning& warn = {});

}  // namespace ldst
