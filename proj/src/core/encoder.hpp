#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "core/archive.hpp"
#include "core/nn_ops.hpp"
#include "core/tensor.hpp"

namespace ldst {

enum class Layer { relu1_1, relu2_1, relu3_1, relu4_1, relu5_1 };

const char* layer_name(Layer layer);
Layer parse_layer(const std::string& name);

inline constexpr std::array<Layer, 2> kContentLayers{Layer::relu4_1, Layer::relu5_1};
inline constexpr std::array<Layer, 4> kStyleLayers{Layer::relu2_1, Layer::relu3_1, Layer::relu4_1,
                                                   Layer::relu5_1};
inline constexpr std::array<Layer, 4> kTrainingLayers = kStyleLayers;

template <typename T>
struct FeatureBundle {
  std::map<Layer, Tensor<T>> maps;
  int pad_bottom = 0;  // reflect padding added to reach a multiple of 16
  int pad_right = 0;

  bool has(Layer l) const { return maps.count(l) != 0; }
  // Throws an argument error naming the layer when absent.
  const Tensor<T>& at(Layer l) const;
  Tensor<T>& at(Layer l);
};

// Frozen VGG-19 trunk through relu5_1. Channel widths come from the weight
// archive; the standard archive carries 64/128/256/512/512.
template <typename T>
class Encoder {
 public:
  static constexpr int kConvCount = 13;
  static const std::array<const char*, kConvCount>& conv_names();

  static Encoder from_archive(const Archive& archive, const std::string& prefix = "");
  static Encoder load(const std::filesystem::path& path);

  // Seeded He-initialised trunk; width_divisor scales every layer width.
  static Encoder random(int width_divisor, std::uint64_t seed);

  void write_to(Archive& archive, const std::string& prefix = "") const;

  // Spatial input is reflect-padded to a multiple of 16.
  FeatureBundle<T> extract(const Tensor<T>& image, std::span<const Layer> layers) const;

  struct Tape {
    int in_h = 0;
    int in_w = 0;
    std::vector<Tensor<T>> activations;  // activations[0] is the normalised padded input
    std::vector<PoolResult<T>> pools;
    int deepest_op = -1;
  };
  FeatureBundle<T> extract(const Tensor<T>& image, std::span<const Layer> layers, Tape& tape) const;
  // Gradient w.r.t. the raw input image for gradients given at bundle layers.
  Tensor<T> backward(const Tape& tape, const FeatureBundle<T>& grads) const;

  int channels(Layer l) const;
  const ConvParams<T>& conv(int i) const { return convs_[i]; }
  std::array<T, 3> mean() const { return mean_; }
  std::array<T, 3> stddev() const { return std_; }

  template <typename U>
  Encoder<U> cast() const;

 private:
  template <typename U>
  friend class Encoder;

  std::array<ConvParams<T>, kConvCount> convs_;
  std::array<T, 3> mean_{};
  std::array<T, 3> std_{};
};

// Writes a standalone encoder weight archive (random trunk) to disk.
void write_random_encoder_archive(const std::filesystem::path& path, int width_divisor,
                                  std::uint64_t seed);

}  // namespace ldst
