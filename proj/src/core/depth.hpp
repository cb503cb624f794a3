#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "core/archive.hpp"
#include "core/imaging.hpp"
#include "core/tensor.hpp"

namespace ldst {

enum class DepthKind { pretrained_monodepth, analytic_stub };

struct DepthBackend {
  DepthKind kind = DepthKind::analytic_stub;
  std::optional<std::filesystem::path> weights_path;
};

// "monodepth" | "stub"
DepthBackend parse_depth_backend(const std::string& name);
std::string depth_backend_name(const DepthBackend& backend);

// Differentiable relative-depth estimator: 3xHxW in [0,1] -> 1xHxW in [0,1].
template <typename T>
class DepthEstimator {
 public:
  virtual ~DepthEstimator() = default;
  virtual std::string name() const = 0;
  virtual Tensor<T> estimate(const Tensor<T>& rgb) const = 0;
  // Vector-Jacobian product d<grad_map, estimate(rgb)>/d rgb.
  virtual Tensor<T> backward(const Tensor<T>& rgb, const Tensor<T>& grad_map) const = 0;
};

// Luminance, 15x15 box blur (edge-replicated), inverted, min-max normalised.
template <typename T>
class StubDepth final : public DepthEstimator<T> {
 public:
  static constexpr int kBoxSize = 15;
  std::string name() const override { return "stub"; }
  Tensor<T> estimate(const Tensor<T>& rgb) const override;
  Tensor<T> backward(const Tensor<T>& rgb, const Tensor<T>& grad_map) const override;
};

// Monocular depth network (ResNet-18 encoder + skip decoder, sigmoid
// disparity head) loaded from an LDST archive converted from the public
// monodepth2 release. Inputs are resized to the network's feed resolution
// and the disparity is resized back, converted to depth, and normalised.
template <typename T>
class MonodepthDepth final : public DepthEstimator<T> {
 public:
  static MonodepthDepth from_archive(const Archive& archive);
  static MonodepthDepth load(const std::filesystem::path& path);

  std::string name() const override { return "monodepth"; }
  Tensor<T> estimate(const Tensor<T>& rgb) const override;
  Tensor<T> backward(const Tensor<T>& rgb, const Tensor<T>& grad_map) const override;

  int feed_height() const;
  int feed_width() const;

  struct Network;
  MonodepthDepth();
  MonodepthDepth(MonodepthDepth&&) noexcept;
  MonodepthDepth& operator=(MonodepthDepth&&) noexcept;
  ~MonodepthDepth() override;

 private:
  std::unique_ptr<Network> net_;
};

// Resolves the weights file for pretrained backends: explicit path, else
// $LDSTYLE_WEIGHTS_DIR/<default_name>.
std::filesystem::path resolve_weights(const std::optional<std::filesystem::path>& explicit_path,
                                      const std::string& default_name);

template <typename T>
std::unique_ptr<DepthEstimator<T>> make_depth_estimator(const DepthBackend& backend);

GrayMap estimate_depth(const DepthEstimator<float>& estimator, const Image& img);

template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& x);
template <typename T>
Tensor<T> minmax_normalize_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

// Writes a seeded random-weight archive with the monodepth layout; used by
// tests and smoke runs that have no pretrained weights.
Archive random_monodepth_archive(int feed_height, int feed_width, std::uint64_t seed);

}  // namespace ldst
