#include <doctest.h>

#include <cmath>

#include "core/depth.hpp"
#include "core/losses.hpp"
#include "support.hpp"

using namespace ldst;
using namespace ldst_test;

namespace {

const Encoder<double>& small_encoder() {
  static const Encoder<double> enc = Encoder<float>::random(16, 11).cast<double>();
  return enc;
}

FeatureBundle<double> feats(const Tensor<double>& x, std::span<const Layer> layers) {
  return small_encoder().extract(x, layers);
}

// Analytic image gradient of a feature-space loss via the encoder tape.
template <typename LossFn>
std::vector<double> feature_loss_grad(const Tensor<double>& x, std::span<const Layer> layers,
                                      LossFn loss) {
  Encoder<double>::Tape tape;
  const auto fx = small_encoder().extract(x, layers, tape);
  FeatureBundle<double> g;
  loss(fx, &g);
  return small_encoder().backward(tape, g).data;
}

}  // namespace

TEST_CASE("losses vanish on identical inputs") {
  StubDepth<double> depth;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = random_tensor<double>(3, 16, 16, 50 + seed);
    const auto fx = feats(x, kTrainingLayers);
    CHECK(content_loss(fx, fx) == 0.0);
    CHECK(style_loss(fx, fx) == 0.0);
    CHECK(laplacian_loss(x, x) == 0.0);
    CHECK(depth_loss(x, x, depth) == 0.0);
  }
}

TEST_CASE("losses are nonnegative on random pairs") {
  StubDepth<double> depth;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = random_tensor<double>(3, 16, 16, 100 + 2 * seed);
    const auto b = random_tensor<double>(3, 16, 16, 101 + 2 * seed);
    const auto fa = feats(a, kTrainingLayers);
    const auto fb = feats(b, kTrainingLayers);
    CHECK(content_loss(fa, fb) >= 0.0);
    CHECK(style_loss(fa, fb) >= 0.0);
    CHECK(laplacian_loss(a, b) >= 0.0);
    CHECK(depth_loss(a, b, depth) >= 0.0);
  }
}

TEST_CASE("laplacian loss ignores a constant offset") {
  const auto a = random_tensor<double>(3, 10, 10, 7);
  auto b = a;
  for (auto& v : b.data) v += 0.3;
  CHECK(laplacian_loss(a, b) < 1e-24);
}

TEST_CASE("weighted total") {
  const auto b = total_loss(1, 2, 3, 4, LossWeights{});
  CHECK(b.total == doctest::Approx(1 * 1 + 3 * 2 + 0.1 * 3 + 20 * 4));
  CHECK_THROWS_AS(LossWeights({1, -1, 0, 0}).validate(), Error);
  CHECK_THROWS_AS(LossWeights({1, NAN, 0, 0}).validate(), Error);
}

struct GradCase {
  Tensor<double> x, c, s;
};

GradCase grad_case(std::uint64_t seed) {
  return {random_tensor<double>(3, 6, 6, 300 + seed), random_tensor<double>(3, 6, 6, 400 + seed),
          random_tensor<double>(3, 6, 6, 500 + seed)};
}

TEST_CASE("content loss gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [x, c, s] = grad_case(seed);
    const auto fc = feats(c, kContentLayers);
    const auto analytic = feature_loss_grad(x, kContentLayers, [&](const auto& fx, auto* g) {
      content_loss(fx, fc, g, 1.0);
    });
    const auto numeric = numeric_gradient(
        [&](const Tensor<double>& v) { return content_loss(feats(v, kContentLayers), fc); }, x);
    CAPTURE(seed);
    CHECK(max_relative_error(analytic, numeric) < 1e-3);
  }
}

TEST_CASE("style loss gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [x, c, s] = grad_case(seed);
    const auto fs = feats(s, kStyleLayers);
    const auto analytic = feature_loss_grad(x, kStyleLayers, [&](const auto& fx, auto* g) {
      style_loss(fx, fs, g, 1.0);
    });
    const auto numeric = numeric_gradient(
        [&](const Tensor<double>& v) { return style_loss(feats(v, kStyleLayers), fs); }, x);
    CAPTURE(seed);
    CHECK(max_relative_error(analytic, numeric) < 1e-3);
  }
}

TEST_CASE("laplacian loss gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [x, c, s] = grad_case(seed);
    Tensor<double> g;
    laplacian_loss(x, c, &g, 1.0);
    const auto numeric =
        numeric_gradient([&](const Tensor<double>& v) { return laplacian_loss(v, c); }, x);
    CAPTURE(seed);
    CHECK(max_relative_error(g.data, numeric) < 1e-3);
  }
}

TEST_CASE("depth loss gradient matches central differences") {
  StubDepth<double> depth;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [x, c, s] = grad_case(seed);
    Tensor<double> g;
    depth_loss(x, c, depth, &g, 1.0);
    const auto numeric =
        numeric_gradient([&](const Tensor<double>& v) { return depth_loss(v, c, depth); }, x);
    CAPTURE(seed);
    CHECK(max_relative_error(g.data, numeric) < 1e-3);
  }
}

TEST_CASE("objective gradient matches central differences") {
  StubDepth<double> depth;
  const auto x = random_tensor<double>(3, 6, 6, 900);
  const auto c = random_tensor<double>(3, 6, 6, 901);
  const auto s = random_tensor<double>(3, 6, 6, 902);
  const auto targets = make_targets(small_encoder(), static_cast<const DepthEstimator<double>*>(&depth), c, s);
  const LossWeights w;
  const auto r = evaluate_objective(small_encoder(), static_cast<const DepthEstimator<double>*>(&depth), x, targets, w, true);
  const auto numeric = numeric_gradient(
      [&](const Tensor<double>& v) {
        return evaluate_objective(small_encoder(), static_cast<const DepthEstimator<double>*>(&depth), v, targets, w, false).breakdown.total;
      },
      x);
  CHECK(max_relative_error(r.grad.data, numeric) < 1e-3);
}

TEST_CASE("zero weights give a zero gradient") {
  StubDepth<double> depth;
  const auto x = random_tensor<double>(3, 8, 8, 1);
  const auto targets = make_targets(small_encoder(), static_cast<const DepthEstimator<double>*>(&depth),
                                    random_tensor<double>(3, 8, 8, 2), random_tensor<double>(3, 8, 8, 3));
  const auto r = evaluate_objective(small_encoder(), static_cast<const DepthEstimator<double>*>(&depth), x, targets,
                                    LossWeights{0, 0, 0, 0}, true);
  for (double v : r.grad.data) CHECK(v == 0.0);
  CHECK(r.breakdown.total == 0.0);
}

TEST_CASE("depth term without an estimator is rejected") {
  const auto x = random_tensor<double>(3, 8, 8, 1);
  const auto targets = make_targets<double>(small_encoder(), nullptr, x, x);
  CHECK_THROWS_AS(evaluate_objective<double>(small_encoder(), nullptr, x, targets, LossWeights{}, false), Error);
  CHECK_NOTHROW(evaluate_objective<double>(small_encoder(), nullptr, x, targets, LossWeights{1, 3, 0.1, 0}, false));
}
