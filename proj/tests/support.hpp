#pragma once
// Independent reference implementations and fixtures shared by the unit
// tests and the acceptance runner. Nothing here calls the code under test
// except to build inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "core/encoder.hpp"
#include "core/imaging.hpp"
#include "core/tensor.hpp"
#include "core/transfer_net.hpp"

namespace ldst_test {

using ldst::Tensor;

// splitmix64; the Python reference script uses the same generator.
struct SplitMix {
  std::uint64_t state;
  explicit SplitMix(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double unit() { return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0); }
  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }
};

template <typename T>
Tensor<T> random_tensor(int c, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  SplitMix rng(seed);
  Tensor<T> t(c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.range(lo, hi));
  return t;
}

inline ldst::Image random_image(int h, int w, std::uint64_t seed) {
  return ldst::Image(random_tensor<float>(3, h, w, seed));
}

// Seeded noise pair for the SSIM cross-check (see reference/ssim_reference.py).
inline std::pair<Tensor<float>, Tensor<float>> ssim_noise_pair(std::uint64_t seed, int h = 32,
                                                               int w = 40) {
  SplitMix rng(seed);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> a(n), noise(n);
  for (auto& v : a) v = rng.unit();
  for (auto& v : noise) v = rng.unit();
  Tensor<float> ta(1, h, w), tb(1, h, w);
  for (std::size_t i = 0; i < n; ++i) {
    ta.data[i] = static_cast<float>(a[i]);
    tb.data[i] = static_cast<float>(std::clamp(0.7 * a[i] + 0.3 * noise[i], 0.0, 1.0));
  }
  return {ta, tb};
}

// scikit-image structural_similarity on ssim_noise_pair(seed), seeds 1..5.
inline constexpr double kSsimReference[5] = {0.8868841055513217, 0.8847818662913308,
                                             0.8689862687147607, 0.8820044990871139,
                                             0.8749776250260192};

// Nested-loop 3x3 convolution, borders by edge replication, per channel.
inline Tensor<double> laplacian_oracle(const Tensor<double>& x) {
  static const int k[3][3] = {{0, -1, 0}, {-1, 4, -1}, {0, -1, 0}};
  Tensor<double> out(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int xx = 0; xx < x.width; ++xx) {
        double s = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::clamp(y + dy, 0, x.height - 1);
            const int xi = std::clamp(xx + dx, 0, x.width - 1);
            s += k[dy + 1][dx + 1] * x.at(c, yy, xi);
          }
        }
        out.at(c, y, xx) = s;
      }
    }
  }
  return out;
}

// Per-position attention: for each query position, softmax over key
// positions of <q_i, k_j>, then a weighted sum of value columns.
struct AttentionOracle {
  std::vector<std::vector<double>> rows;  // [query][key]
  Tensor<double> output;
};

inline AttentionOracle attention_oracle(const Tensor<double>& q, const Tensor<double>& k,
                                        const Tensor<double>& v) {
  const int nq = q.height * q.width;
  const int nk = k.height * k.width;
  AttentionOracle o;
  o.rows.assign(nq, std::vector<double>(nk));
  o.output = Tensor<double>(v.channels, q.height, q.width);
  for (int i = 0; i < nq; ++i) {
    std::vector<double> s(nk);
    double mx = -1e300;
    for (int j = 0; j < nk; ++j) {
      double d = 0;
      for (int c = 0; c < q.channels; ++c) d += q.data[c * nq + i] * k.data[c * nk + j];
      s[j] = d;
      mx = std::max(mx, d);
    }
    double z = 0;
    for (int j = 0; j < nk; ++j) z += std::exp(s[j] - mx);
    for (int j = 0; j < nk; ++j) o.rows[i][j] = std::exp(s[j] - mx) / z;
    for (int c = 0; c < v.channels; ++c) {
      double acc = 0;
      for (int j = 0; j < nk; ++j) acc += o.rows[i][j] * v.data[c * nk + j];
      o.output.data[c * nq + i] = acc;
    }
  }
  return o;
}

// Per-channel (x - mean) / sqrt(var + eps), population variance.
inline Tensor<double> standardize_oracle(const Tensor<double>& x, double eps) {
  Tensor<double> out = x;
  const int n = x.height * x.width;
  for (int c = 0; c < x.channels; ++c) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += x.data[c * n + i];
    m /= n;
    double var = 0;
    for (int i = 0; i < n; ++i) var += (x.data[c * n + i] - m) * (x.data[c * n + i] - m);
    var /= n;
    for (int i = 0; i < n; ++i) out.data[c * n + i] = (x.data[c * n + i] - m) / std::sqrt(var + eps);
  }
  return out;
}

// 1x1 convolution by explicit loops.
inline Tensor<double> pointwise_oracle(const ldst::ConvParams<double>& p, const Tensor<double>& x) {
  const int n = x.height * x.width;
  Tensor<double> out(p.out_channels, x.height, x.width);
  for (int o = 0; o < p.out_channels; ++o) {
    for (int i = 0; i < n; ++i) {
      double s = p.bias[o];
      for (int c = 0; c < p.in_channels; ++c) s += p.weight[o * p.in_channels + c] * x.data[c * n + i];
      out.data[o * n + i] = s;
    }
  }
  return out;
}

// Central differences of f around x, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f,
                                            Tensor<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data[i];
    x.data[i] = orig + h;
    const double up = f(x);
    x.data[i] = orig - h;
    const double down = f(x);
    x.data[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Largest elementwise relative error. Entries smaller than 1e-4 of the
// largest gradient entry are measured against that floor instead, since
// central differences carry ~1e-10 absolute rounding noise.
inline double max_relative_error(const std::vector<double>& analytic,
                                 const std::vector<double>& numeric) {
  double scale = 0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-4 * scale, 1e-9);
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / den);
  }
  return worst;
}

// Small untrained model on a narrow random trunk; enough for contract tests.
struct TinyNet {
  ldst::Encoder<float> encoder;
  ldst::TransferModel<float> model;
};

inline TinyNet tiny_net(std::uint64_t seed = 7, int width_divisor = 16) {
  TinyNet n{ldst::Encoder<float>::random(width_divisor, seed), {}};
  n.model = ldst::TransferModel<float>::shaped_for(n.encoder);
  n.model.initialize(seed + 1);
  return n;
}

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ldst_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
};

}  // namespace ldst_test
