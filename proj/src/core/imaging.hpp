#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ldst {

// RGB raster, values in [0, 1], stored channel-major as 3 x H x W.
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.0f) : pixels_(3, height, width, fill) {}
  // Takes a 3-channel tensor; throws a dimension error otherwise.
  explicit Image(Tensor<float> pixels);

  int height() const { return pixels_.height; }
  int width() const { return pixels_.width; }
  bool empty() const { return pixels_.empty(); }

  float& at(int c, int y, int x) { return pixels_.at(c, y, x); }
  float at(int c, int y, int x) const { return pixels_.at(c, y, x); }

  const Tensor<float>& tensor() const { return pixels_; }
  Tensor<float>& tensor() { return pixels_; }

  bool operator==(const Image& other) const {
    return pixels_.same_shape(other.pixels_) && pixels_.data == other.pixels_.data;
  }

 private:
  Tensor<float> pixels_;
};

enum class MapKind { laplacian, depth, edge, luminance };

struct GrayMap {
  Tensor<float> values;  // 1 x H x W
  MapKind kind = MapKind::luminance;
  std::string backend;  // producer, e.g. "sobel" or "stub"
};

// Decoding. 8/16-bit, 1/3/4 channels; grey is replicated and alpha dropped.
Image load_image(const std::filesystem::path& path);
Image decode_image(std::span<const unsigned char> bytes, const std::string& origin = "<memory>");

enum class ImageFormat { png, jpeg };

// 8-bit quantisation with round-half-up.
std::vector<unsigned char> encode_image(const Image& img, ImageFormat format = ImageFormat::png);
void save_image(const Image& img, const std::filesystem::path& path);

std::uint8_t quantize_unit(float v);

Image resize_smaller_dim(const Image& img, int target);
Image random_crop(const Image& img, int size, std::uint64_t seed);
Image random_crop(const Image& img, int size, std::mt19937_64& rng);

// Discrete Laplacian, edge-replicated borders, same size output, applied per
// channel. Constants map to exactly zero everywhere.
inline constexpr std::array<std::array<int, 3>, 3> kLaplacianKernel{{
    {{0, -1, 0}},
    {{-1, 4, -1}},
    {{0, -1, 0}},
}};

template <typename T>
Tensor<T> laplacian_filter(const Tensor<T>& x);
// Transpose of laplacian_filter (differs from it only at the border).
template <typename T>
Tensor<T> laplacian_filter_adjoint(const Tensor<T>& g);

std::array<GrayMap, 3> laplacian_matrix(const Image& img);
GrayMap laplacian_matrix(const GrayMap& channel);

// 0.299 R + 0.587 G + 0.114 B
template <typename T>
Tensor<T> luminance(const Tensor<T>& rgb);
template <typename T>
Tensor<T> luminance_backward(const Tensor<T>& grad_lum);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over all fully covered window positions. Windows larger than the
// image shrink to the largest odd size that fits.
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {});
double ssim(const GrayMap& a, const GrayMap& b, const SsimOptions& opts = {});
double ssim_gray(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& opts = {});

// Min-max normalisation to [0, 1]; a constant map becomes all zeros.
void normalize_unit_range(Tensor<float>& map);

}  // namespace ldst
