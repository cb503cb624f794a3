#include <doctest.h>

#include <cmath>

#include "core/encoder.hpp"
#include "core/nn_ops.hpp"
#include "core/transfer_net.hpp"
#include "support.hpp"

using namespace ldst;
using namespace ldst_test;

namespace {

void fill(ConvParams<double>& p, std::uint64_t seed) {
  SplitMix rng(seed);
  for (auto& w : p.weight) w = rng.range(-0.8, 0.8);
  for (auto& b : p.bias) b = rng.range(-0.2, 0.2);
}

SanetBlock<double> random_block(int c, std::uint64_t seed) {
  SanetBlock<double> b(c);
  fill(b.f, seed);
  fill(b.g, seed + 1);
  fill(b.h, seed + 2);
  fill(b.out, seed + 3);
  return b;
}

}  // namespace

TEST_CASE("attention rows are a probability distribution") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = random_tensor<float>(4, 5, 3, seed, -2, 2);
    const auto k = random_tensor<float>(4, 4, 4, seed + 100, -2, 2);
    const auto v = random_tensor<float>(6, 4, 4, seed + 200);
    std::vector<float> att;
    const auto out = attention_forward(q, k, v, att);
    REQUIRE(att.size() == 15u * 16u);
    for (int i = 0; i < 15; ++i) {
      double sum = 0;
      for (int j = 0; j < 16; ++j) {
        CHECK(att[i * 16 + j] >= 0.0f);
        sum += att[i * 16 + j];
      }
      CHECK(std::abs(sum - 1.0) < 1e-5);
    }
    CHECK(out.channels == 6);
    CHECK(out.height == 5);
  }
}

TEST_CASE("sanet_forward matches a per-position oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto block = random_block(4, 40 + seed);
    const auto content = random_tensor<double>(4, 3, 3, 60 + seed, -1, 2);
    const auto style = random_tensor<double>(4, 3, 3, 80 + seed, -1, 2);
    SanetTape<double> tape;
    const auto out = sanet_forward(block, content, style, &tape);

    const auto q = pointwise_oracle(block.f, standardize_oracle(content, kSanetNormEps));
    const auto k = pointwise_oracle(block.g, standardize_oracle(style, kSanetNormEps));
    const auto v = pointwise_oracle(block.h, style);
    const auto ref = attention_oracle(q, k, v);
    for (int i = 0; i < 9; ++i) {
      double sum = 0;
      for (int j = 0; j < 9; ++j) {
        sum += tape.attention[i * 9 + j];
        CHECK(std::abs(tape.attention[i * 9 + j] - ref.rows[i][j]) < 1e-5);
      }
      CHECK(std::abs(sum - 1.0) < 1e-5);
    }
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out.data[i] - ref.output.data[i]) < 1e-5);
  }
}

TEST_CASE("sanet rejects mismatched channels") {
  const auto block = random_block(4, 1);
  CHECK_THROWS_AS(sanet_forward(block, random_tensor<double>(3, 3, 3, 1), random_tensor<double>(4, 3, 3, 2)),
                  Error);
}

TEST_CASE("conv2d matches a direct loop") {
  ConvParams<double> p(3, 2, 3);
  fill(p, 5);
  const auto x = random_tensor<double>(2, 5, 6, 9);
  for (PadMode mode : {PadMode::zero, PadMode::reflect}) {
    const auto y = conv2d(x, p, same_geometry(3, mode));
    for (int o = 0; o < 3; ++o)
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 6; ++c) {
          double s = p.bias[o];
          for (int i = 0; i < 2; ++i)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                int yy = r + dy, xx = c + dx;
                if (mode == PadMode::reflect) {
                  yy = reflect_index(yy, 5);
                  xx = reflect_index(xx, 6);
                } else if (yy < 0 || xx < 0 || yy >= 5 || xx >= 6) {
                  continue;
                }
                s += p.weight[((o * 2 + i) * 3 + dy + 1) * 3 + dx + 1] * x.at(i, yy, xx);
              }
          CHECK(std::abs(y.at(o, r, c) - s) < 1e-12);
        }
  }
}

TEST_CASE("model gradient matches central differences") {
  // Small double model; loss = <w, decode_raw(fuse(content, style))>.
  const auto fenc = Encoder<float>::random(16, 3);
  const auto enc = fenc.cast<double>();
  auto fm = TransferModel<float>::shaped_for(fenc);
  fm.initialize(4);
  auto model = fm.cast<double>();
  const auto c = enc.extract(random_tensor<double>(3, 16, 16, 1), kContentLayers);
  const auto s = enc.extract(random_tensor<double>(3, 16, 16, 2), kContentLayers);
  ForwardTape<double> tape;
  const auto fused = model.fuse(c, s, &tape);
  const auto out = model.decode_raw(fused, &tape.decoder);
  const auto w = random_tensor<double>(out.channels, out.height, out.width, 3, -1, 1);
  auto loss = [&](const TransferModel<double>& m) {
    const auto o = m.decode_raw(m.fuse(c, s));
    double acc = 0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += w.data[i] * o.data[i];
    return acc;
  };
  auto grads = model.zeros_like();
  const auto gf = model.decoder_backward(tape.decoder, w, grads);
  model.fuse_backward(tape, gf, grads);

  // spot-check a handful of entries in every parameter tensor
  auto params = model.parameters();
  auto gparams = grads.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& weight = params[p].second->weight;
    const auto& gw = gparams[p].second->weight;
    for (std::size_t i = 0; i < weight.size(); i += std::max<std::size_t>(1, weight.size() / 3)) {
      const double orig = weight[i];
      const double h = 1e-5;
      weight[i] = orig + h;
      const double up = loss(model);
      weight[i] = orig - h;
      const double down = loss(model);
      weight[i] = orig;
      const double num = (up - down) / (2 * h);
      CAPTURE(params[p].first);
      CHECK(std::abs(num - gw[i]) <= 1e-4 * std::max({std::abs(num), std::abs(gw[i]), 1e-3}));
    }
  }
}

TEST_CASE("model archive round trip is bit exact") {
  const auto net = tiny_net();
  Archive a;
  net.model.write_to(a, "model.");
  const auto bytes = a.serialize();
  const auto back = TransferModel<float>::from_archive(Archive::parse(bytes, "mem"), "model.");
  const auto p1 = net.model.parameters();
  const auto p2 = back.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].first == p2[i].first);
    CHECK(p1[i].second->weight == p2[i].second->weight);
    CHECK(p1[i].second->bias == p2[i].second->bias);
  }
}

TEST_CASE("stylize keeps the content size and range") {
  const auto net = tiny_net();
  const Image content = random_image(37, 29, 1);
  const Image style = random_image(20, 24, 2);
  const Image out = stylize(net.model, net.encoder, content, style);
  CHECK(out.height() == 37);
  CHECK(out.width() == 29);
  for (float v : out.tensor().data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("encoder archive round trip") {
  const auto enc = Encoder<float>::random(16, 9);
  Archive a;
  enc.write_to(a, "encoder.");
  const auto back = Encoder<float>::from_archive(Archive::parse(a.serialize(), "mem"), "encoder.");
  for (int i = 0; i < Encoder<float>::kConvCount; ++i) CHECK(enc.conv(i).weight == back.conv(i).weight);
  CHECK(back.channels(Layer::relu4_1) == 512 / 16);
}
