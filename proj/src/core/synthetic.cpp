#include "core/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

namespace ldst {

namespace {

using Rgb = std::array<float, 3>;

Rgb random_color(std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

void blend(Image& img, int y, int x, const Rgb& c, float a) {
  for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = (1 - a) * img.at(ch, y, x) + a * c[ch];
}

void clamp_unit(Image& img) {
  for (auto& v : img.tensor().data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

Image synth_content(int height, int width, std::uint64_t seed) {
  require(height > 0 && width > 0, ErrorCode::dimension, "synth: size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(height, width);

  const float horizon = height * (0.35f + 0.25f * u(rng));
  const Rgb sky_top = random_color(rng, 0.3f, 0.9f);
  const Rgb sky_low = random_color(rng, 0.5f, 1.0f);
  const Rgb ground_near = random_color(rng, 0.1f, 0.6f);
  const Rgb ground_far = random_color(rng, 0.3f, 0.8f);
  const float tile = 4.0f + 8.0f * u(rng);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (y < horizon) {
        const float t = y / std::max(horizon, 1.0f);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1 - t) * sky_top[c] + t * sky_low[c];
      } else {
        // perspective ground with a checker that shrinks toward the horizon
        const float d = (y - horizon + 1) / (height - horizon + 1);
        const float gz = 1.0f / d;
        const float gx = (x - width / 2.0f) / (d * width) * 4.0f;
        const bool check = (static_cast<int>(std::floor(gz * tile * 0.2f)) +
                            static_cast<int>(std::floor(gx * tile * 0.5f))) % 2 == 0;
        const float shade = check ? 1.0f : 0.8f;
        for (int c = 0; c < 3; ++c) {
          img.at(c, y, x) = shade * ((1 - d) * ground_far[c] + d * ground_near[c]);
        }
      }
    }
  }

  // shaded solids, far ones first so near ones occlude them
  const int n_objects = 3 + static_cast<int>(u(rng) * 4);
  std::vector<float> depths(n_objects);
  for (auto& d : depths) d = u(rng);
  std::sort(depths.begin(), depths.end());
  for (float depth : depths) {
    const float base_y = horizon + depth * (height - horizon);
    const float scale = 0.15f + 0.5f * depth;
    const float w = width * scale * (0.3f + 0.4f * u(rng));
    const float h = height * scale * (0.4f + 0.6f * u(rng));
    const float cx = width * u(rng);
    const Rgb col = random_color(rng, 0.05f, 0.95f);
    const bool round = u(rng) < 0.5f;
    for (int y = std::max(0, static_cast<int>(base_y - h)); y < std::min(height, static_cast<int>(base_y)); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - w / 2)); x < std::min(width, static_cast<int>(cx + w / 2)); ++x) {
        const float nx = (x - cx) / (w / 2);
        const float ny = (y - (base_y - h / 2)) / (h / 2);
        if (round && nx * nx + ny * ny > 1.0f) continue;
        const float light = 0.55f + 0.45f * std::clamp(-0.6f * nx - 0.4f * ny + 0.3f, -1.0f, 1.0f);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c] * light;
      }
    }
  }

  std::normal_distribution<float> noise(0.0f, 0.015f);
  for (auto& v : img.tensor().data) v += noise(rng);
  clamp_unit(img);
  return img;
}

Image synth_style(int height, int width, std::uint64_t seed) {
  require(height > 0 && width > 0, ErrorCode::dimension, "synth: size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::array<Rgb, 5> palette;
  for (auto& c : palette) c = random_color(rng);
  Image img(height, width);

  // colour cells (nearest of a few random sites)
  const int sites = 6 + static_cast<int>(u(rng) * 20);
  std::vector<std::array<float, 2>> pts(sites);
  std::vector<int> site_color(sites);
  for (int i = 0; i < sites; ++i) {
    pts[i] = {u(rng) * height, u(rng) * width};
    site_color[i] = static_cast<int>(u(rng) * palette.size()) % static_cast<int>(palette.size());
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int best = 0;
      float bd = 1e30f;
      for (int i = 0; i < sites; ++i) {
        const float dy = y - pts[i][0], dx = x - pts[i][1];
        const float d = dy * dy + dx * dx;
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = palette[site_color[best]][c];
    }
  }

  // stripes
  const float angle = u(rng) * 3.14159f;
  const float freq = 0.05f + 0.3f * u(rng);
  const Rgb stripe = palette[static_cast<int>(u(rng) * 4.99f)];
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float s = std::sin((x * std::cos(angle) + y * std::sin(angle)) * freq);
      if (s > 0.4f) blend(img, y, x, stripe, 0.5f);
    }
  }

  // brush strokes: thick random walks
  const int strokes = 20 + static_cast<int>(u(rng) * 60);
  for (int s = 0; s < strokes; ++s) {
    float y = u(rng) * height, x = u(rng) * width;
    float dir = u(rng) * 6.2832f;
    const float radius = 1.5f + 4.0f * u(rng);
    const Rgb col = palette[static_cast<int>(u(rng) * 4.99f)];
    const int len = 10 + static_cast<int>(u(rng) * 60);
    for (int step = 0; step < len; ++step) {
      dir += (u(rng) - 0.5f) * 0.6f;
      y += std::sin(dir) * 2.0f;
      x += std::cos(dir) * 2.0f;
      const int r = static_cast<int>(std::ceil(radius));
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = static_cast<int>(y) + dy, xx = static_cast<int>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= height || xx >= width) continue;
          if (dy * dy + dx * dx > radius * radius) continue;
          blend(img, yy, xx, col, 0.7f);
        }
      }
    }
  }

  std::normal_distribution<float> grain(0.0f, 0.04f);
  for (auto& v : img.tensor().data) v += grain(rng);
  clamp_unit(img);
  return img;
}

void write_synth_set(const std::filesystem::path& dir, SynthKind kind, int count, int height,
                     int width, std::uint64_t seed) {
  require(count >= 0, ErrorCode::argument, "synth: count must be >= 0");
  std::filesystem::create_directories(dir);
  const char* prefix = kind == SynthKind::content ? "content" : "style";
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const Image img = kind == SynthKind::content ? synth_content(height, width, s)
                                                 : synth_style(height, width, s);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.png", prefix, i);
    save_image(img, dir / name);
  }
}

}  // namespace ldst
