#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "core/controls.hpp"
#include "support.hpp"

using namespace ldst;
using namespace ldst_test;

namespace {

const TinyNet& net() {
  static const TinyNet n = tiny_net(21);
  return n;
}

Tensor<float> half_mask(int h, int w, bool left) {
  Tensor<float> m(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(0, y, x) = ((x < w / 2) == left) ? 1.0f : 0.0f;
  return m;
}

}  // namespace

TEST_CASE("alpha blend is linear in the decoder input") {
  const Image c = random_image(48, 40, 1);
  const Image s = random_image(32, 32, 2);
  const auto f0 = alpha_features(net().model, net().encoder, c, s, 0.0);
  const auto f1 = alpha_features(net().model, net().encoder, c, s, 1.0);
  const auto fh = alpha_features(net().model, net().encoder, c, s, 0.5);
  REQUIRE(f0.fused.same_shape(fh.fused));
  for (std::size_t i = 0; i < fh.fused.size(); ++i) {
    const double mean = 0.5 * (static_cast<double>(f0.fused.data[i]) + f1.fused.data[i]);
    CHECK(std::abs(fh.fused.data[i] - mean) < 1e-6);
  }
}

TEST_CASE("alpha endpoints reproduce the plain branches bit-exactly") {
  const Image c = random_image(40, 48, 3);
  const Image s = random_image(32, 32, 4);
  CHECK(stylize_with_alpha(net().model, net().encoder, c, s, 1.0) == stylize(net().model, net().encoder, c, s));
  CHECK(stylize_with_alpha(net().model, net().encoder, c, s, 0.0) == stylize(net().model, net().encoder, c, c));
}

TEST_CASE("alpha outside [0,1] is clamped with a warning") {
  std::vector<std::string> warnings;
  const auto warn = [&](const std::string& w) { warnings.push_back(w); };
  CHECK(clamp_alpha(1.5, warn) == 1.0);
  CHECK(clamp_alpha(-0.5, warn) == 0.0);
  CHECK(clamp_alpha(0.25, warn) == 0.25);
  CHECK(warnings.size() == 2);
  CHECK_THROWS_AS(clamp_alpha(NAN), Error);
}

TEST_CASE("style weights are normalised and validated") {
  const auto w = normalized_weights({1, 3}, 2);
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == doctest::Approx(0.75));
  CHECK_THROWS_AS(normalized_weights({}, 0), Error);
  CHECK_THROWS_AS(normalized_weights({1}, 2), Error);
  CHECK_THROWS_AS(normalized_weights({-1, 2}, 2), Error);
  CHECK_THROWS_AS(normalized_weights({0, 0}, 2), Error);
}

TEST_CASE("multi-style mix") {
  const Image c = random_image(32, 32, 5);
  const Image s1 = random_image(32, 32, 6);
  const Image s2 = random_image(32, 32, 7);
  SUBCASE("single style equals stylize") {
    CHECK(stylize_multi(net().model, net().encoder, c, {{s1}, {2.0}}) == stylize(net().model, net().encoder, c, s1));
  }
  SUBCASE("one-hot weights select a style") {
    const auto f = multi_features(net().model, net().encoder, c, {{s1, s2}, {0.0, 1.0}});
    const auto ref = fused_features(net().model, net().encoder, c, s2);
    CHECK(f.fused.data == ref.fused.data);
  }
  SUBCASE("mix is the weighted feature average") {
    const auto f = multi_features(net().model, net().encoder, c, {{s1, s2}, {1.0, 3.0}});
    const auto a = fused_features(net().model, net().encoder, c, s1);
    const auto b = fused_features(net().model, net().encoder, c, s2);
    for (std::size_t i = 0; i < f.fused.size(); ++i)
      CHECK(std::abs(f.fused.data[i] - (0.25 * a.fused.data[i] + 0.75 * b.fused.data[i])) < 1e-6);
  }
}

TEST_CASE("complementary binary masks give per-style features exactly") {
  const Image c = random_image(64, 64, 8);
  const Image s1 = random_image(32, 32, 9);
  const Image s2 = random_image(32, 32, 10);
  const std::vector<Region> regions{{half_mask(64, 64, true), s1}, {half_mask(64, 64, false), s2}};
  const auto f = spatial_features(net().model, net().encoder, c, regions);
  const auto a = fused_features(net().model, net().encoder, c, s1);
  const auto b = fused_features(net().model, net().encoder, c, s2);
  const int fh = f.fused.height, fw = f.fused.width;
  REQUIRE(fw == 8);
  for (int ch = 0; ch < f.fused.channels; ++ch)
    for (int y = 0; y < fh; ++y)
      for (int x = 0; x < fw; ++x) {
        const float expected = x < fw / 2 ? a.fused.at(ch, y, x) : b.fused.at(ch, y, x);
        REQUIRE(f.fused.at(ch, y, x) == expected);
      }
}

TEST_CASE("full-frame mask reproduces plain stylize") {
  const Image c = random_image(40, 56, 11);
  const Image s = random_image(32, 32, 12);
  const std::vector<Region> regions{{Tensor<float>(1, 40, 56, 1.0f), s}};
  const Image masked = stylize_spatial(net().model, net().encoder, c, regions);
  const Image plain = stylize(net().model, net().encoder, c, s);
  for (std::size_t i = 0; i < plain.tensor().size(); ++i)
    CHECK(std::abs(masked.tensor().data[i] - plain.tensor().data[i]) < 1e-6);
}

TEST_CASE("empty mask list is the reconstruction branch") {
  const Image c = random_image(32, 32, 13);
  CHECK(stylize_spatial(net().model, net().encoder, c, {}) == stylize(net().model, net().encoder, c, c));
}

TEST_CASE("mask validation and overlap renormalisation") {
  const Image c = random_image(32, 32, 14);
  const Image s = random_image(32, 32, 15);
  CHECK_THROWS_AS(spatial_features(net().model, net().encoder, c, {{Tensor<float>(1, 16, 16, 1.0f), s}}), Error);
  CHECK_THROWS_AS(spatial_features(net().model, net().encoder, c, {{Tensor<float>(1, 32, 32, 1.5f), s}}), Error);
  std::vector<std::string> warnings;
  const auto warn = [&](const std::string& w) { warnings.push_back(w); };
  const std::vector<Region> twice{{Tensor<float>(1, 32, 32, 1.0f), s}, {Tensor<float>(1, 32, 32, 1.0f), s}};
  const auto f = spatial_features(net().model, net().encoder, c, twice, warn);
  CHECK(warnings.size() == 1);
  const auto ref = fused_features(net().model, net().encoder, c, s);
  for (std::size_t i = 0; i < f.fused.size(); ++i) CHECK(std::abs(f.fused.data[i] - ref.fused.data[i]) < 1e-5);
}

TEST_CASE("downsample_mask area-averages 8x8 blocks") {
  Tensor<float> m(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) m.at(0, y, x) = (x < 4 && y < 8) ? 1.0f : 0.0f;
  const auto d = downsample_mask(m, 2, 2);
  CHECK(d.at(0, 0, 0) == 0.5f);
  CHECK(d.at(0, 0, 1) == 0.0f);
  CHECK(d.at(0, 1, 0) == 0.0f);
}

TEST_CASE("grey mask images keep their exact level") {
  Image img(2, 2, 0.0f);
  for (int ch = 0; ch < 3; ++ch) img.at(ch, 0, 0) = 128.0f / 255.0f;
  const auto m = mask_from_image(img);
  CHECK(m.at(0, 0, 0) == 128.0f / 255.0f);
  CHECK(m.at(0, 1, 1) == 0.0f);
}

TEST_CASE("combined request") {
  const Image c = random_image(32, 32, 16);
  const Image s1 = random_image(32, 32, 17);
  const Image s2 = random_image(32, 32, 18);
  SUBCASE("plain request equals stylize") {
    ControlRequest r;
    r.mix = {{s1}, {1.0}};
    CHECK(stylize_request(net().model, net().encoder, c, r) == stylize(net().model, net().encoder, c, s1));
  }
  SUBCASE("alpha zero ignores the styles") {
    ControlRequest r;
    r.mix = {{s1, s2}, {1.0, 1.0}};
    r.alpha = 0.0;
    CHECK(stylize_request(net().model, net().encoder, c, r) == stylize(net().model, net().encoder, c, c));
  }
  SUBCASE("full-frame mask request equals stylize") {
    ControlRequest r;
    r.mix = {{s1, s2}, {1.0, 1.0}};
    r.masks = {Tensor<float>(1, 32, 32, 1.0f)};
    r.mask_styles = {1};
    const Image out = stylize_request(net().model, net().encoder, c, r);
    const Image plain = stylize(net().model, net().encoder, c, s2);
    for (std::size_t i = 0; i < out.tensor().size(); ++i)
      CHECK(std::abs(out.tensor().data[i] - plain.tensor().data[i]) < 1e-6);
  }
  SUBCASE("bad mask index") {
    ControlRequest r;
    r.mix = {{s1}, {1.0}};
    r.masks = {Tensor<float>(1, 32, 32, 1.0f)};
    r.mask_styles = {3};
    CHECK_THROWS_AS(request_features(net().model, net().encoder, c, r), Error);
  }
}
