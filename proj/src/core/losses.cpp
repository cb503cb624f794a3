#include "core/losses.hpp"

#include <cmath>

#include "core/imaging.hpp"

namespace ldst {

void LossWeights::validate() const {
  for (double w : {content, style, lap, depth}) {
    require(std::isfinite(w) && w >= 0, ErrorCode::argument,
            "loss weights must be finite and nonnegative");
  }
}

LossBreakdown total_loss(double content, double style, double lap, double depth,
                         const LossWeights& weights) {
  LossBreakdown b{content, style, lap, depth, 0};
  b.total = weights.content * content + weights.style * style + weights.lap * lap +
            weights.depth * depth;
  return b;
}

namespace {

template <typename T>
Tensor<T>& grad_slot(FeatureBundle<T>& grad, Layer l, const Tensor<T>& like) {
  auto it = grad.maps.find(l);
  if (it == grad.maps.end()) it = grad.maps.emplace(l, Tensor<T>(like.channels, like.height, like.width)).first;
  return it->second;
}

template <typename T>
struct ChannelStats {
  std::vector<T> mean;
  std::vector<T> stddev;
};

template <typename T>
ChannelStats<T> channel_stats(const Tensor<T>& x) {
  ChannelStats<T> s{std::vector<T>(x.channels), std::vector<T>(x.channels)};
  const T n = static_cast<T>(x.plane());
  for (int c = 0; c < x.channels; ++c) {
    T m{0};
    for (T v : x.channel(c)) m += v;
    m /= n;
    T var{0};
    for (T v : x.channel(c)) var += (v - m) * (v - m);
    var /= n;
    s.mean[c] = m;
    s.stddev[c] = std::sqrt(var + static_cast<T>(kStyleStdEps));
  }
  return s;
}

}  // namespace

template <typename T>
T content_loss(const FeatureBundle<T>& stylized, const FeatureBundle<T>& content,
               FeatureBundle<T>* grad, T scale) {
  T total{0};
  for (Layer l : kContentLayers) {
    const auto& a = stylized.at(l);
    const auto& b = content.at(l);
    require_same_shape(a, b, "content_loss");
    T acc{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
      const T d = a.data[i] - b.data[i];
      acc += d * d;
    }
    const T n = static_cast<T>(a.size());
    total += acc / n;
    if (grad) {
      auto& g = grad_slot(*grad, l, a);
      const T k = scale * T{2} / n;
      for (std::size_t i = 0; i < a.size(); ++i) g.data[i] += k * (a.data[i] - b.data[i]);
    }
  }
  return total;
}

template <typename T>
T style_loss(const FeatureBundle<T>& stylized, const FeatureBundle<T>& style,
             FeatureBundle<T>* grad, T scale) {
  T total{0};
  for (Layer l : kStyleLayers) {
    const auto& a = stylized.at(l);
    const auto& b = style.at(l);
    require(a.channels == b.channels, ErrorCode::dimension, "style_loss: channel mismatch");
    const auto sa = channel_stats(a);
    const auto sb = channel_stats(b);
    T mean_sq{0};
    T std_sq{0};
    for (int c = 0; c < a.channels; ++c) {
      mean_sq += (sa.mean[c] - sb.mean[c]) * (sa.mean[c] - sb.mean[c]);
      std_sq += (sa.stddev[c] - sb.stddev[c]) * (sa.stddev[c] - sb.stddev[c]);
    }
    const T mean_norm = std::sqrt(mean_sq);
    const T std_norm = std::sqrt(std_sq);
    total += mean_norm + std_norm;
    if (!grad) continue;
    auto& g = grad_slot(*grad, l, a);
    const T n = static_cast<T>(a.plane());
    for (int c = 0; c < a.channels; ++c) {
      const T dmean = mean_norm > T{0} ? (sa.mean[c] - sb.mean[c]) / mean_norm : T{0};
      const T dstd = std_norm > T{0} ? (sa.stddev[c] - sb.stddev[c]) / std_norm : T{0};
      auto src = a.channel(c);
      auto dst = g.channel(c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] += scale * (dmean / n + dstd * (src[i] - sa.mean[c]) / (n * sa.stddev[c]));
      }
    }
  }
  return total;
}

template <typename T>
T laplacian_loss(const Tensor<T>& stylized, const Tensor<T>& content, Tensor<T>* grad, T scale) {
  require_same_shape(stylized, content, "laplacian_loss");
  const Tensor<T> ls = laplacian_filter(stylized);
  const Tensor<T> lc = laplacian_filter(content);
  Tensor<T> diff(ls.channels, ls.height, ls.width);
  T acc{0};
  for (std::size_t i = 0; i < ls.size(); ++i) {
    diff.data[i] = ls.data[i] - lc.data[i];
    acc += diff.data[i] * diff.data[i];
  }
  const T n = static_cast<T>(ls.size());
  if (grad) {
    const Tensor<T> back = laplacian_filter_adjoint(diff);
    if (grad->empty()) *grad = Tensor<T>(stylized.channels, stylized.height, stylized.width);
    const T k = scale * T{2} / n;
    for (std::size_t i = 0; i < back.size(); ++i) grad->data[i] += k * back.data[i];
  }
  return acc / n;
}

template <typename T>
T depth_loss_to_target(const Tensor<T>& stylized, const Tensor<T>& content_depth,
                       const DepthEstimator<T>& estimator, Tensor<T>* grad, T scale) {
  const Tensor<T> ds = estimator.estimate(stylized);
  require_same_shape(ds, content_depth, "depth_loss");
  Tensor<T> diff(ds.channels, ds.height, ds.width);
  T acc{0};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    diff.data[i] = ds.data[i] - content_depth.data[i];
    acc += diff.data[i] * diff.data[i];
  }
  const T n = static_cast<T>(ds.size());
  if (grad) {
    for (auto& v : diff.data) v *= scale * T{2} / n;
    const Tensor<T> back = estimator.backward(stylized, diff);
    if (grad->empty()) *grad = Tensor<T>(stylized.channels, stylized.height, stylized.width);
    add_inplace(*grad, back);
  }
  return acc / n;
}

template <typename T>
T depth_loss(const Tensor<T>& stylized, const Tensor<T>& content,
             const DepthEstimator<T>& estimator, Tensor<T>* grad, T scale) {
  require_same_shape(stylized, content, "depth_loss");
  return depth_loss_to_target(stylized, estimator.estimate(content), estimator, grad, scale);
}

template <typename T>
ObjectiveTargets<T> make_targets(const Encoder<T>& encoder, const DepthEstimator<T>* depth,
                                 const Tensor<T>& content, const Tensor<T>& style,
                                 const FeatureBundle<T>* content_features,
                                 const FeatureBundle<T>* style_features) {
  ObjectiveTargets<T> t;
  t.content_image = content;
  t.content_features = content_features ? *content_features : encoder.extract(content, kContentLayers);
  t.style_features = style_features ? *style_features : encoder.extract(style, kStyleLayers);
  if (depth) t.content_depth = depth->estimate(content);
  return t;
}

template <typename T>
ObjectiveResult<T> evaluate_objective(const Encoder<T>& encoder, const DepthEstimator<T>* depth,
                                      const Tensor<T>& stylized, const ObjectiveTargets<T>& targets,
                                      const LossWeights& weights, bool want_grad) {
  weights.validate();
  typename Encoder<T>::Tape tape;
  const FeatureBundle<T> feats = encoder.extract(stylized, kTrainingLayers, tape);
  FeatureBundle<T> feat_grad;
  ObjectiveResult<T> r;
  if (want_grad) r.grad = Tensor<T>(stylized.channels, stylized.height, stylized.width);

  const T content = content_loss(feats, targets.content_features,
                                 want_grad && weights.content > 0 ? &feat_grad : nullptr,
                                 static_cast<T>(weights.content));
  const T style = style_loss(feats, targets.style_features,
                             want_grad && weights.style > 0 ? &feat_grad : nullptr,
                             static_cast<T>(weights.style));
  const T lap = laplacian_loss(stylized, targets.content_image,
                               want_grad && weights.lap > 0 ? &r.grad : nullptr,
                               static_cast<T>(weights.lap));
  T depth_value{0};
  if (depth && !targets.content_depth.empty()) {
    depth_value = depth_loss_to_target(stylized, targets.content_depth, *depth,
                                       want_grad && weights.depth > 0 ? &r.grad : nullptr,
                                       static_cast<T>(weights.depth));
  } else {
    require(weights.depth == 0, ErrorCode::argument, "depth term weighted but no depth backend");
  }
  if (want_grad && !feat_grad.maps.empty()) add_inplace(r.grad, encoder.backward(tape, feat_grad));
  r.breakdown = total_loss(content, style, lap, depth_value, weights);
  return r;
}

#define LDST_INSTANTIATE(T)                                                                        \
  template T content_loss(const FeatureBundle<T>&, const FeatureBundle<T>&, FeatureBundle<T>*, T); \
  template T style_loss(const FeatureBundle<T>&, const FeatureBundle<T>&, FeatureBundle<T>*, T);   \
  template T laplacian_loss(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, T);                    \
  template T depth_loss(const Tensor<T>&, const Tensor<T>&, const DepthEstimator<T>&, Tensor<T>*,  \
                        T);                                                                        \
  template T depth_loss_to_target(const Tensor<T>&, const Tensor<T>&, const DepthEstimator<T>&,    \
                                  Tensor<T>*, T);                                                  \
  template ObjectiveTargets<T> make_targets(const Encoder<T>&, const DepthEstimator<T>*,           \
                                            const Tensor<T>&, const Tensor<T>&,                    \
                                            const FeatureBundle<T>*, const FeatureBundle<T>*);     \
  template ObjectiveResult<T> evaluate_objective(const Encoder<T>&, const DepthEstimator<T>*,      \
                                                 const Tensor<T>&, const ObjectiveTargets<T>&,     \
                                                 const LossWeights&, bool);

LDST_INSTANTIATE(float)
LDST_INSTANTIATE(double)
#undef LDST_INSTANTIATE

}  // namespace ldst
