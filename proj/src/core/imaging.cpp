#include "core/imaging.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "core/fsutil.hpp"
#include "core/nn_ops.hpp"

namespace ldst {

Image::Image(Tensor<float> pixels) : pixels_(std::move(pixels)) {
  require(pixels_.channels == 3, ErrorCode::dimension,
          "image must have 3 channels, got " + std::to_string(pixels_.channels));
  require(pixels_.height >= 1 && pixels_.width >= 1, ErrorCode::dimension, "image is empty");
}

namespace {

Image from_mat(const cv::Mat& mat, const std::string& origin) {
  if (mat.empty()) fail(ErrorCode::decode, "cannot decode image: " + origin);
  double scale = 0;
  switch (mat.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: fail(ErrorCode::decode, "unsupported sample depth in " + origin);
  }
  const int ch = mat.channels();
  if (ch != 1 && ch != 3 && ch != 4) fail(ErrorCode::decode, "unsupported channel count in " + origin);
  Image img(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        // OpenCV stores BGR(A); grey is replicated.
        const int src_c = ch == 1 ? 0 : 2 - c;
        const double v = mat.depth() == CV_8U
                             ? mat.ptr<std::uint8_t>(y)[x * ch + src_c]
                             : mat.ptr<std::uint16_t>(y)[x * ch + src_c];
        img.at(c, y, x) = static_cast<float>(v * scale);
      }
    }
  }
  return img;
}

cv::Mat to_mat8(const Image& img) {
  cv::Mat mat(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) row[x * 3 + (2 - c)] = quantize_unit(img.at(c, y, x));
  }
  return mat;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    fail(ErrorCode::decode, "cannot read image: " + path.string());
  }
  return decode_image(bytes, path.string());
}

Image decode_image(std::span<const unsigned char> bytes, const std::string& origin) {
  if (bytes.empty()) fail(ErrorCode::decode, "cannot decode image (empty): " + origin);
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<unsigned char*>(bytes.data()));
  cv::Mat mat;
  try {
    mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    fail(ErrorCode::decode, "cannot decode image: " + origin);
  }
  return from_mat(mat, origin);
}

std::uint8_t quantize_unit(float v) {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

std::vector<unsigned char> encode_image(const Image& img, ImageFormat format) {
  std::vector<unsigned char> out;
  const char* ext = format == ImageFormat::png ? ".png" : ".jpg";
  std::vector<int> params;
  if (format == ImageFormat::jpeg) params = {cv::IMWRITE_JPEG_QUALITY, 95};
  if (!cv::imencode(ext, to_mat8(img), out, params)) fail(ErrorCode::io, "image encoding failed");
  return out;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto format = (ext == ".jpg" || ext == ".jpeg") ? ImageFormat::jpeg : ImageFormat::png;
  write_file_atomic(path, encode_image(img, format));
}

Image resize_smaller_dim(const Image& img, int target) {
  require(target >= 1, ErrorCode::argument, "resize target must be >= 1");
  const int h = img.height();
  const int w = img.width();
  int nh = target;
  int nw = target;
  if (h <= w) {
    nw = static_cast<int>(std::lround(static_cast<double>(w) * target / h));
  } else {
    nh = static_cast<int>(std::lround(static_cast<double>(h) * target / w));
  }
  if (nh == h && nw == w) return img;
  return Image(resize_bilinear(img.tensor(), nh, nw));
}

Image random_crop(const Image& img, int size, std::mt19937_64& rng) {
  if (img.height() < size || img.width() < size) {
    fail(ErrorCode::dimension, "cannot crop " + std::to_string(size) + "px from " +
                                   std::to_string(img.width()) + "x" +
                                   std::to_string(img.height()) + " image");
  }
  std::uniform_int_distribution<int> dy(0, img.height() - size);
  std::uniform_int_distribution<int> dx(0, img.width() - size);
  const int oy = dy(rng);
  const int ox = dx(rng);
  Image out(size, size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = img.at(c, oy + y, ox + x);
  return out;
}

Image random_crop(const Image& img, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_crop(img, size, rng);
}

template <typename T>
Tensor<T> laplacian_filter(const Tensor<T>& x) {
  Tensor<T> out(x.channels, x.height, x.width);
  const int h = x.height;
  const int w = x.width;
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      const int up = std::max(y - 1, 0), down = std::min(y + 1, h - 1);
      for (int xx = 0; xx < w; ++xx) {
        const int left = std::max(xx - 1, 0), right = std::min(xx + 1, w - 1);
        out.at(c, y, xx) = T{4} * x.at(c, y, xx) - x.at(c, up, xx) - x.at(c, down, xx) -
                           x.at(c, y, left) - x.at(c, y, right);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> laplacian_filter_adjoint(const Tensor<T>& g) {
  Tensor<T> out(g.channels, g.height, g.width);
  const int h = g.height;
  const int w = g.width;
  for (int c = 0; c < g.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      const int up = std::max(y - 1, 0), down = std::min(y + 1, h - 1);
      for (int xx = 0; xx < w; ++xx) {
        const int left = std::max(xx - 1, 0), right = std::min(xx + 1, w - 1);
        const T v = g.at(c, y, xx);
        out.at(c, y, xx) += T{4} * v;
        out.at(c, up, xx) -= v;
        out.at(c, down, xx) -= v;
        out.at(c, y, left) -= v;
        out.at(c, y, right) -= v;
      }
    }
  }
  return out;
}

template Tensor<float> laplacian_filter(const Tensor<float>&);
template Tensor<double> laplacian_filter(const Tensor<double>&);
template Tensor<float> laplacian_filter_adjoint(const Tensor<float>&);
template Tensor<double> laplacian_filter_adjoint(const Tensor<double>&);

std::array<GrayMap, 3> laplacian_matrix(const Image& img) {
  const auto lap = laplacian_filter(img.tensor());
  std::array<GrayMap, 3> maps;
  for (int c = 0; c < 3; ++c) {
    maps[c].kind = MapKind::laplacian;
    maps[c].values = Tensor<float>(1, img.height(), img.width());
    auto src = lap.channel(c);
    std::copy(src.begin(), src.end(), maps[c].values.data.begin());
  }
  return maps;
}

GrayMap laplacian_matrix(const GrayMap& channel) {
  require(channel.values.channels == 1, ErrorCode::dimension, "expected a single-channel map");
  return {laplacian_filter(channel.values), MapKind::laplacian, {}};
}

template <typename T>
Tensor<T> luminance(const Tensor<T>& rgb) {
  require(rgb.channels == 3, ErrorCode::dimension, "luminance needs 3 channels");
  Tensor<T> out(1, rgb.height, rgb.width);
  const std::size_t n = rgb.plane();
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = T(0.299) * rgb.data[i] + T(0.587) * rgb.data[n + i] + T(0.114) * rgb.data[2 * n + i];
  }
  return out;
}

template <typename T>
Tensor<T> luminance_backward(const Tensor<T>& grad_lum) {
  Tensor<T> g(3, grad_lum.height, grad_lum.width);
  const std::size_t n = grad_lum.plane();
  for (std::size_t i = 0; i < n; ++i) {
    g.data[i] = T(0.299) * grad_lum.data[i];
    g.data[n + i] = T(0.587) * grad_lum.data[i];
    g.data[2 * n + i] = T(0.114) * grad_lum.data[i];
  }
  return g;
}

template Tensor<float> luminance(const Tensor<float>&);
template Tensor<double> luminance(const Tensor<double>&);
template Tensor<float> luminance_backward(const Tensor<float>&);
template Tensor<double> luminance_backward(const Tensor<double>&);

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const int r = size / 2;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-static_cast<double>((i - r) * (i - r)) / (2 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable "valid" filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& win) {
  const int k = static_cast<int>(win.size());
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < k; ++i) acc += win[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < k; ++i) acc += win[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim_gray(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& opts) {
  require(a.channels == 1 && b.channels == 1, ErrorCode::dimension, "ssim expects single-channel maps");
  require_same_shape(a, b, "ssim");
  const int h = a.height;
  const int w = a.width;
  int k = std::min({opts.window, h, w});
  if (k % 2 == 0) --k;
  const auto win = gaussian_window(k, opts.sigma);
  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a.data[i];
    y[i] = b.data[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, win);
  const auto my = filter_valid(y, h, w, win);
  const auto sxx = filter_valid(xx, h, w, win);
  const auto syy = filter_valid(yy, h, w, win);
  const auto sxy = filter_valid(xy, h, w, win);
  const double c1 = (opts.k1 * opts.dynamic_range) * (opts.k1 * opts.dynamic_range);
  const double c2 = (opts.k2 * opts.dynamic_range) * (opts.k2 * opts.dynamic_range);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    const double num = (2 * mx[i] * my[i] + c1) * (2 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

double ssim(const Image& a, const Image& b, const SsimOptions& opts) {
  if (!a.tensor().same_shape(b.tensor())) {
    fail(ErrorCode::dimension, "ssim: image shapes differ (" + a.tensor().shape_string() + " vs " +
                                   b.tensor().shape_string() + ")");
  }
  return ssim_gray(luminance(a.tensor()), luminance(b.tensor()), opts);
}

double ssim(const GrayMap& a, const GrayMap& b, const SsimOptions& opts) {
  return ssim_gray(a.values, b.values, opts);
}

void normalize_unit_range(Tensor<float>& map) {
  if (map.empty()) return;
  const auto [lo, hi] = std::minmax_element(map.data.begin(), map.data.end());
  const float mn = *lo;
  const float mx = *hi;
  if (!(mx > mn)) {
    std::fill(map.data.begin(), map.data.end(), 0.0f);
    return;
  }
  const float inv = 1.0f / (mx - mn);
  for (auto& v : map.data) v = (v - mn) * inv;
}

}  // namespace ldst
