#pragma once

#include <string>
#include <variant>
#include <vector>

#include "core/depth.hpp"
#include "core/edges.hpp"
#include "core/encoder.hpp"
#include "core/imaging.hpp"
#include "core/transfer_net.hpp"

namespace ldst {

struct PairScores {
  double content_ssim = 0;
  double depth_ssim = 0;
  double edge_ssim = 0;
};

struct StructureReport {
  std::string method_name;
  double content_ssim = 0;
  double depth_ssim = 0;
  double edge_ssim = 0;
  int n_pairs = 0;
  std::vector<PairScores> per_pair;
};

struct StylizedPair {
  Image content;
  Image stylized;
};

// Means over pairs of SSIM(content, stylized) on the images, their depth maps
// and their edge maps.
StructureReport structure_consistency(const std::vector<StylizedPair>& pairs,
                                      const DepthEstimator<float>& depth,
                                      const EdgeDetector& edges,
                                      const std::string& method_name = "ours");

struct SpeedReport {
  int resolution = 0;
  double mean_seconds = 0;
  double std_seconds = 0;
  int n_runs = 0;       // total, warmup included
  int warmup_runs = 0;
  std::string hardware_note;
  std::vector<double> raw_seconds;  // every run in order, warmup first
};

inline constexpr int kMinBenchRuns = 10;

// Times end-to-end stylize (no disk I/O) on seeded random square inputs,
// strictly sequentially. Mean/std cover the runs after the warmup ones.
std::vector<SpeedReport> speed_benchmark(const TransferModel<float>& model,
                                         const Encoder<float>& encoder,
                                         const std::vector<int>& resolutions, int n_runs,
                                         int warmup, std::uint64_t seed = 0);

std::string hardware_note();

// run,resolution,warmup,seconds
std::string raw_timing_log(const std::vector<SpeedReport>& reports);

using Report = std::variant<StructureReport, SpeedReport>;

enum class TableFormat { text, csv };

// Structure reports and speed reports are emitted as separate tables. Text
// output carries published reference rows as labelled citations; CSV holds
// measured rows only so it parses back to the same values.
std::string render_table(const std::vector<Report>& reports, TableFormat format);

std::vector<StructureReport> parse_structure_csv(const std::string& csv);
std::vector<SpeedReport> parse_speed_csv(const std::string& csv);

}  // namespace ldst
