#include "core/controls.hpp"

#include <algorithm>
#include <cmath>

namespace ldst {

double clamp_alpha(double alpha, const ControlWarning& warn) {
  require(std::isfinite(alpha), ErrorCode::argument, "alpha must be finite");
  if (alpha < 0.0 || alpha > 1.0) {
    const double clamped = std::clamp(alpha, 0.0, 1.0);
    if (warn) warn("alpha " + std::to_string(alpha) + " clamped to " + std::to_string(clamped));
    return clamped;
  }
  return alpha;
}

FusedFeatures alpha_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                             const Image& content, const Image& style, double alpha,
                             const ControlWarning& warn) {
  alpha = clamp_alpha(alpha, warn);
  if (alpha == 1.0) return fused_features(model, encoder, content, style);
  FusedFeatures cc = fused_features(model, encoder, content, content);
  if (alpha == 0.0) return cc;
  const FusedFeatures cs = fused_features(model, encoder, content, style);
  const float a = static_cast<float>(alpha);
  const float b = static_cast<float>(1.0 - alpha);
  for (std::size_t i = 0; i < cc.fused.size(); ++i) {
    cc.fused.data[i] = b * cc.fused.data[i] + a * cs.fused.data[i];
  }
  return cc;
}

Image stylize_with_alpha(const TransferModel<float>& model, const Encoder<float>& encoder,
                         const Image& content, const Image& style, double alpha,
                         const ControlWarning& warn) {
  return decode_to_content(model, alpha_features(model, encoder, content, style, alpha, warn));
}

std::vector<double> normalized_weights(const std::vector<double>& weights, std::size_t n_styles) {
  require(n_styles >= 1, ErrorCode::argument, "at least one style is required");
  require(weights.size() == n_styles, ErrorCode::argument,
          "got " + std::to_string(weights.size()) + " weights for " + std::to_string(n_styles) +
              " styles");
  double sum = 0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0, ErrorCode::argument, "style weights must be finite and >= 0");
    sum += w;
  }
  require(sum > 0, ErrorCode::argument, "style weights must not all be zero");
  std::vector<double> out(weights);
  for (auto& w : out) w /= sum;
  return out;
}

FusedFeatures multi_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                             const Image& content, const StyleMix& mix) {
  const auto w = normalized_weights(mix.weights, mix.styles.size());
  if (mix.styles.size() == 1) return fused_features(model, encoder, content, mix.styles[0]);
  const auto fc = encoder.extract(content.tensor(), kContentLayers);
  std::vector<double> acc;
  FusedFeatures out;
  for (std::size_t k = 0; k < mix.styles.size(); ++k) {
    if (w[k] == 0.0) continue;
    const auto fs = encoder.extract(mix.styles[k].tensor(), kContentLayers);
    const Tensor<float> f = model.fuse(fc, fs);
    if (acc.empty()) {
      acc.assign(f.size(), 0.0);
      out.fused = Tensor<float>(f.channels, f.height, f.width);
    }
    for (std::size_t i = 0; i < f.size(); ++i) acc[i] += w[k] * f.data[i];
  }
  for (std::size_t i = 0; i < acc.size(); ++i) out.fused.data[i] = static_cast<float>(acc[i]);
  out.content_h = content.height();
  out.content_w = content.width();
  return out;
}

Image stylize_multi(const TransferModel<float>& model, const Encoder<float>& encoder,
                    const Image& content, const StyleMix& mix) {
  return decode_to_content(model, multi_features(model, encoder, content, mix));
}

Tensor<float> mask_from_image(const Image& img) {
  Tensor<float> m(1, img.height(), img.width());
  const auto& t = img.tensor();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float r = t.at(0, y, x), g = t.at(1, y, x), b = t.at(2, y, x);
      // grey masks keep their exact level
      m.at(0, y, x) = (r == g && g == b) ? r : 0.299f * r + 0.587f * g + 0.114f * b;
    }
  }
  return m;
}

Tensor<float> downsample_mask(const Tensor<float>& mask, int feature_h, int feature_w) {
  require(mask.channels == 1, ErrorCode::dimension, "mask must have one channel");
  require(feature_h > 0 && feature_w > 0, ErrorCode::dimension, "empty feature grid");
  const int ph = feature_h * 8;
  const int pw = feature_w * 8;
  require(ph >= mask.height && pw >= mask.width && ph - mask.height < 16 && pw - mask.width < 16,
          ErrorCode::dimension, "mask does not match the feature grid");
  Tensor<float> out(1, feature_h, feature_w);
  for (int fy = 0; fy < feature_h; ++fy) {
    for (int fx = 0; fx < feature_w; ++fx) {
      double s = 0;
      for (int dy = 0; dy < 8; ++dy) {
        const int y = reflect_index(fy * 8 + dy, mask.height);
        for (int dx = 0; dx < 8; ++dx) s += mask.at(0, y, reflect_index(fx * 8 + dx, mask.width));
      }
      out.at(0, fy, fx) = static_cast<float>(s / 64.0);
    }
  }
  return out;
}

FusedFeatures spatial_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                               const Image& content, const std::vector<Region>& regions,
                               const ControlWarning& warn) {
  for (const auto& r : regions) {
    require(r.mask.channels == 1 && r.mask.height == content.height() &&
                r.mask.width == content.width(),
            ErrorCode::dimension,
            "mask size " + std::to_string(r.mask.height) + "x" + std::to_string(r.mask.width) +
                " does not match content " + std::to_string(content.height()) + "x" +
                std::to_string(content.width()));
    for (float v : r.mask.data) {
      require(std::isfinite(v) && v >= 0.0f && v <= 1.0f, ErrorCode::argument,
              "mask values must lie in [0,1]");
    }
  }
  const auto fc = encoder.extract(content.tensor(), kContentLayers);
  FusedFeatures out{model.fuse(fc, fc), content.height(), content.width()};
  if (regions.empty()) return out;
  const int fh = out.fused.height;
  const int fw = out.fused.width;
  const int channels = out.fused.channels;

  std::vector<Tensor<float>> masks;
  for (const auto& r : regions) masks.push_back(downsample_mask(r.mask, fh, fw));
  // Overlapping soft masks are renormalised where their sum exceeds one.
  bool renormalised = false;
  for (int p = 0; p < fh * fw; ++p) {
    float sum = 0;
    for (const auto& m : masks) sum += m.data[p];
    if (sum > 1.0f) {
      renormalised = true;
      for (auto& m : masks) m.data[p] /= sum;
    }
  }
  if (renormalised && warn) warn("overlapping masks renormalised where coverage exceeds 1");

  std::vector<Tensor<float>> styled;
  for (const auto& r : regions) {
    styled.push_back(model.fuse(fc, encoder.extract(r.style.tensor(), kContentLayers)));
  }
  Tensor<float> mixed(channels, fh, fw);
  for (int p = 0; p < fh * fw; ++p) {
    float covered = 0;
    for (const auto& m : masks) covered += m.data[p];
    const float rest = 1.0f - covered;
    for (int c = 0; c < channels; ++c) {
      const std::size_t i = static_cast<std::size_t>(c) * fh * fw + p;
      float v = 0.0f;
      for (std::size_t k = 0; k < masks.size(); ++k) {
        const float m = masks[k].data[p];
        if (m != 0.0f) v += m * styled[k].data[i];
      }
      if (rest != 0.0f) v += rest * out.fused.data[i];
      mixed.data[i] = v;
    }
  }
  out.fused = std::move(mixed);
  return out;
}

Image stylize_spatial(const TransferModel<float>& model, const Encoder<float>& encoder,
                      const Image& content, const std::vector<Region>& regions,
                      const ControlWarning& warn) {
  return decode_to_content(model, spatial_features(model, encoder, content, regions, warn));
}

FusedFeatures request_features(const TransferModel<float>& model, const Encoder<float>& encoder,
                               const Image& content, const ControlRequest& request,
                               const ControlWarning& warn) {
  normalized_weights(request.mix.weights, request.mix.styles.size());
  require(request.masks.size() == request.mask_styles.size(), ErrorCode::argument,
          "each mask needs a style index");
  for (std::size_t idx : request.mask_styles) {
    require(idx < request.mix.styles.size(), ErrorCode::argument,
            "mask style index " + std::to_string(idx) + " out of range");
  }
  const double alpha = clamp_alpha(request.alpha, warn);
  if (alpha == 0.0) {
    const auto fc = encoder.extract(content.tensor(), kContentLayers);
    return {model.fuse(fc, fc), content.height(), content.width()};
  }
  FusedFeatures styled;
  if (!request.masks.empty()) {
    std::vector<Region> regions;
    for (std::size_t k = 0; k < request.masks.size(); ++k) {
      regions.push_back({request.masks[k], request.mix.styles[request.mask_styles[k]]});
    }
    styled = spatial_features(model, encoder, content, regions, warn);
  } else {
    styled = multi_features(model, encoder, content, request.mix);
  }
  if (alpha == 1.0) return styled;
  const auto fc = encoder.extract(content.tensor(), kContentLayers);
  const Tensor<float> cc = model.fuse(fc, fc);
  const float a = static_cast<float>(alpha);
  const float b = static_cast<float>(1.0 - alpha);
  for (std::size_t i = 0; i < cc.size(); ++i) {
    styled.fused.data[i] = b * cc.data[i] + a * styled.fused.data[i];
  }
  return styled;
}

Image stylize_request(const TransferModel<float>& model, const Encoder<float>& encoder,
                      const Image& content, const ControlRequest& request,
                      const ControlWarning& warn) {
  return decode_to_content(model, request_features(model, encoder, content, request, warn));
}

}  // namespace ldst
