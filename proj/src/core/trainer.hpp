#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "core/depth.hpp"
#include "core/encoder.hpp"
#include "core/evaluation.hpp"
#include "core/losses.hpp"
#include "core/transfer_net.hpp"

namespace ldst {

struct TrainConfig {
  std::filesystem::path content_dir;
  std::filesystem::path style_dir;
  double learning_rate = 1e-4;
  int batch_size = 5;
  int resize_target = 512;
  int crop_size = 256;
  std::int64_t max_iterations = 0;
  LossWeights weights;
  std::uint64_t seed = 0;
  DepthBackend depth_backend;
  std::int64_t checkpoint_every = 0;  // 0 = only at the end

  // Frozen encoder: a weight archive, or a seeded random trunk when empty.
  std::filesystem::path encoder_path;
  int encoder_width_divisor = 1;
  std::uint64_t encoder_seed = 0;

  std::filesystem::path checkpoint_path = "checkpoint.ld";
  std::filesystem::path log_path;  // CSV; empty disables

  void validate() const;
  // Applies one key=value setting; unknown keys and bad values are argument errors.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
  // Unknown keys and malformed values are argument errors.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
};

struct Batch {
  std::vector<Tensor<float>> content;
  std::vector<Tensor<float>> style;
};

using WarningSink = std::function<void(const std::string&)>;

// Infinite stream of (content, style) batches. Each side cycles through its
// own reshuffled file order; every image is resized so its smaller side is
// resize_target, then randomly cropped to crop_size.
class PairStream {
 public:
  PairStream(const TrainConfig& cfg, WarningSink warn = {});
  Batch next();
  std::size_t content_count() const { return content_.files.size(); }
  std::size_t style_count() const { return style_.files.size(); }

 private:
  struct Side {
    std::string label;
    std::vector<std::filesystem::path> files;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  Tensor<float> draw(Side& side);

  TrainConfig cfg_;
  WarningSink warn_;
  std::mt19937_64 rng_;
  Side content_;
  Side style_;
};

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct AdamState {
  TransferModel<float> m;
  TransferModel<float> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_update(TransferModel<float>& model, const TransferModel<float>& grads, AdamState& state,
                 double learning_rate);

struct Checkpoint {
  TransferModel<float> model;
  Encoder<float> encoder;
  AdamState adam;
  std::int64_t iteration = 0;
  std::string config_text;
  std::uint32_t schema_version = kArchiveSchemaVersion;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Wrong magic / truncation -> corrupt; other schema -> checkpoint-format.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Archive checkpoint_archive(const Checkpoint& ckpt);
Checkpoint checkpoint_from_archive(const Archive& archive);

// Fresh checkpoint: encoder per config, trainable parts seeded from cfg.seed.
Checkpoint initial_checkpoint(const TrainConfig& cfg);
Encoder<float> make_encoder(const TrainConfig& cfg);

// One optimisation step over the batch; returns the pre-update breakdown
// averaged over the batch. Throws DivergenceError on a non-finite loss.
LossBreakdown train_step(TransferModel<float>& model, const Encoder<float>& encoder,
                         const DepthEstimator<float>* depth, const Batch& batch,
                         const TrainConfig& cfg, AdamState& adam, std::int64_t iteration);

struct TrainHooks {
  std::function<void(std::int64_t, const LossBreakdown&)> on_step;
  WarningSink warn;
  std::function<bool()> should_stop;  // polled before each step
};

// Runs cfg.max_iterations steps from `start` (or a fresh initialisation),
// checkpointing atomically to cfg.checkpoint_path.
Checkpoint train(const TrainConfig& cfg, const TrainHooks& hooks = {},
                 std::optional<Checkpoint> start = std::nullopt);

struct SweepCell {
  double lap = 0;
  double depth = 0;
  std::filesystem::path checkpoint;
  std::optional<StructureReport> report;
  std::string error;  // non-empty when the cell failed
};

struct HeldOutPair {
  Image content;
  Image style;
};

// One model per (lap, depth) cell with shared seed and data order; each
// cell writes <out_dir>/cell_<lap>_<depth>/checkpoint.ld and log.csv.
std::vector<SweepCell> ablation_sweep(const TrainConfig& cfg, const std::vector<double>& lap_values,
                                      const std::vector<double>& depth_values,
                                      const std::vector<HeldOutPair>& held_out,
                                      const std::filesystem::path& out_dir,
                                      const TrainHooks& hooks = {});

std::string cell_name(double lap, double depth);

}  // namespace ldst
