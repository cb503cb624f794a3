#pragma once

#include "core/depth.hpp"
#include "core/encoder.hpp"
#include "core/tensor.hpp"

namespace ldst {

struct LossWeights {
  double content = 1.0;
  double style = 3.0;
  double lap = 0.1;
  double depth = 20.0;

  // All weights must be finite and nonnegative.
  void validate() const;
};

struct LossBreakdown {
  double content = 0;
  double style = 0;
  double lap = 0;
  double depth = 0;
  double total = 0;
};

// Weighted sum of already-evaluated components.
LossBreakdown total_loss(double content, double style, double lap, double depth,
                         const LossWeights& weights);

inline constexpr double kStyleStdEps = 1e-6;

// Sum over relu4_1 and relu5_1 of the per-layer mean squared difference.
// When `grad` is non-null, scale * d/d(stylized) is accumulated into it.
template <typename T>
T content_loss(const FeatureBundle<T>& stylized, const FeatureBundle<T>& content,
               FeatureBundle<T>* grad = nullptr, T scale = T{1});

// Sum over relu2_1..relu5_1 of ||mu_s - mu_t||_2 + ||sigma_s - sigma_t||_2,
// channel statistics taken over spatial positions (population variance).
template <typename T>
T style_loss(const FeatureBundle<T>& stylized, const FeatureBundle<T>& style,
             FeatureBundle<T>* grad = nullptr, T scale = T{1});

// Per-channel Laplacian squared difference, averaged over 3 * H * W.
template <typename T>
T laplacian_loss(const Tensor<T>& stylized, const Tensor<T>& content, Tensor<T>* grad = nullptr,
                 T scale = T{1});

// Mean squared difference of the two depth maps.
template <typename T>
T depth_loss(const Tensor<T>& stylized, const Tensor<T>& content,
             const DepthEstimator<T>& estimator, Tensor<T>* grad = nullptr, T scale = T{1});
template <typename T>
T depth_loss_to_target(const Tensor<T>& stylized, const Tensor<T>& content_depth,
                       const DepthEstimator<T>& estimator, Tensor<T>* grad = nullptr,
                       T scale = T{1});

// Everything the objective needs from the content/style pair, computed once.
template <typename T>
struct ObjectiveTargets {
  Tensor<T> content_image;
  FeatureBundle<T> content_features;  // relu4_1, relu5_1
  FeatureBundle<T> style_features;    // relu2_1 .. relu5_1
  Tensor<T> content_depth;            // empty when the depth term is off
};

template <typename T>
ObjectiveTargets<T> make_targets(const Encoder<T>& encoder, const DepthEstimator<T>* depth,
                                 const Tensor<T>& content, const Tensor<T>& style,
                                 const FeatureBundle<T>* content_features = nullptr,
                                 const FeatureBundle<T>* style_features = nullptr);

template <typename T>
struct ObjectiveResult {
  LossBreakdown breakdown;
  Tensor<T> grad;  // d total / d stylized; empty unless requested
};

// Full weighted objective for one stylized image.
template <typename T>
ObjectiveResult<T> evaluate_objective(const Encoder<T>& encoder, const DepthEstimator<T>* depth,
                                      const Tensor<T>& stylized, const ObjectiveTargets<T>& targets,
                                      const LossWeights& weights, bool want_grad);

}  // namespace ldst
