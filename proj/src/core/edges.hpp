#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "core/archive.hpp"
#include "core/imaging.hpp"

namespace ldst {

enum class EdgeKind { sobel, hed };

struct EdgeBackend {
  EdgeKind kind = EdgeKind::sobel;
  std::optional<std::filesystem::path> weights_path;
};

EdgeBackend parse_edge_backend(const std::string& name);

class EdgeDetector {
 public:
  virtual ~EdgeDetector() = default;
  virtual std::string name() const = 0;
  // Nonnegative map in [0,1]; `backend` field names the producer.
  virtual GrayMap detect(const Image& img) const = 0;
};

// Sobel gradient magnitude on luminance (edge-replicated), scaled by its max.
class SobelEdges final : public EdgeDetector {
 public:
  std::string name() const override { return "sobel"; }
  GrayMap detect(const Image& img) const override;
};

// Holistically-nested edge network: VGG-16 trunk, five 1x1 side outputs
// upsampled to input size, 1x1 fusion and a sigmoid.
class HedEdges final : public EdgeDetector {
 public:
  static HedEdges from_archive(const Archive& archive);
  static HedEdges load(const std::filesystem::path& path);
  std::string name() const override { return "hed"; }
  GrayMap detect(const Image& img) const override;

  struct Network;
  HedEdges();
  HedEdges(HedEdges&&) noexcept;
  HedEdges& operator=(HedEdges&&) noexcept;
  ~HedEdges() override;

 private:
  std::unique_ptr<Network> net_;
};

std::unique_ptr<EdgeDetector> make_edge_detector(const EdgeBackend& backend);

inline GrayMap edge_map(const Image& img) { return SobelEdges{}.detect(img); }

Archive random_hed_archive(int width_divisor, std::uint64_t seed);

}  // namespace ldst
