#include "core/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace ldst {

StructureReport structure_consistency(const std::vector<StylizedPair>& pairs,
                                      const DepthEstimator<float>& depth,
                                      const EdgeDetector& edges,
                                      const std::string& method_name) {
  require(!pairs.empty(), ErrorCode::argument, "structure_consistency: no pairs");
  StructureReport r;
  r.method_name = method_name;
  for (const auto& p : pairs) {
    require(p.content.height() == p.stylized.height() && p.content.width() == p.stylized.width(),
            ErrorCode::dimension, "structure_consistency: pair sizes differ");
    PairScores s;
    s.content_ssim = ssim(p.content, p.stylized);
    s.depth_ssim = ssim(estimate_depth(depth, p.content), estimate_depth(depth, p.stylized));
    s.edge_ssim = ssim(edges.detect(p.content), edges.detect(p.stylized));
    r.per_pair.push_back(s);
  }
  for (const auto& s : r.per_pair) {
    r.content_ssim += s.content_ssim;
    r.depth_ssim += s.depth_ssim;
    r.edge_ssim += s.edge_ssim;
  }
  r.n_pairs = static_cast<int>(pairs.size());
  r.content_ssim /= r.n_pairs;
  r.depth_ssim /= r.n_pairs;
  r.edge_ssim /= r.n_pairs;
  return r;
}

std::string hardware_note() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " threads";
}

namespace {

Image noise_image(int size, std::mt19937_64& rng) {
  Image img(size, size);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.tensor().data) v = u(rng);
  return img;
}

}  // namespace

std::vector<SpeedReport> speed_benchmark(const TransferModel<float>& model,
                                         const Encoder<float>& encoder,
                                         const std::vector<int>& resolutions, int n_runs,
                                         int warmup, std::uint64_t seed) {
  require(!resolutions.empty(), ErrorCode::argument, "bench: no resolutions");
  require(n_runs >= kMinBenchRuns, ErrorCode::argument,
          "bench: need at least " + std::to_string(kMinBenchRuns) + " runs");
  require(warmup >= 0 && warmup < n_runs, ErrorCode::argument,
          "bench: warmup must be in [0, runs)");
  std::mt19937_64 rng(seed);
  const std::string note = hardware_note();
  std::vector<SpeedReport> out;
  for (int res : resolutions) {
    require(res >= 16, ErrorCode::argument, "bench: resolution must be >= 16");
    const Image content = noise_image(res, rng);
    const Image style = noise_image(res, rng);
    SpeedReport r;
    r.resolution = res;
    r.n_runs = n_runs;
    r.warmup_runs = warmup;
    r.hardware_note = note;
    for (int i = 0; i < n_runs; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const Image result = stylize(model, encoder, content, style);
      const auto t1 = std::chrono::steady_clock::now();
      require(!result.empty(), ErrorCode::internal, "bench: empty output");
      r.raw_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    const int timed = n_runs - warmup;
    for (int i = warmup; i < n_runs; ++i) r.mean_seconds += r.raw_seconds[i];
    r.mean_seconds /= timed;
    double var = 0;
    for (int i = warmup; i < n_runs; ++i) {
      var += (r.raw_seconds[i] - r.mean_seconds) * (r.raw_seconds[i] - r.mean_seconds);
    }
    r.std_seconds = timed > 1 ? std::sqrt(var / (timed - 1)) : 0.0;
    out.push_back(std::move(r));
  }
  return out;
}

std::string raw_timing_log(const std::vector<SpeedReport>& reports) {
  std::ostringstream os;
  os << "run,resolution,warmup,seconds\n";
  char buf[64];
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.raw_seconds.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", r.raw_seconds[i]);
      os << i << ',' << r.resolution << ',' << (static_cast<int>(i) < r.warmup_runs ? 1 : 0)
         << ',' << buf << '\n';
    }
  }
  return os.str();
}

namespace {

constexpr const char* kStructureHeader = "method,content_ssim,depth_ssim,edge_ssim,n_pairs";
constexpr const char* kSpeedHeader =
    "resolution,mean_seconds,std_seconds,n_runs,warmup_runs,hardware_note";

struct CitedStructure {
  const char* method;
  double content, depth, edge;
};
// Published structure-consistency rows, full-scale training.
constexpr CitedStructure kCitedStructure[] = {
    {"Ours", 0.410, 0.886, 0.477},
    {"SANet", 0.364, 0.846, 0.423},
};

struct CitedSpeed {
  const char* method;
  double s256, s512;
};
constexpr CitedSpeed kCitedSpeed[] = {
    {"Ours", 0.015, 0.050},
    {"SANet", 0.017, 0.055},
    {"AdaIN", 0.018, 0.065},
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}
std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}
std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void structure_text(std::ostringstream& os, const std::vector<const StructureReport*>& rows) {
  os << pad_right("Method", 24) << pad_left("Content SSIM", 14) << pad_left("Depth Map SSIM", 16)
     << pad_left("Edge Map SSIM", 15) << pad_left("Pairs", 7) << '\n';
  for (const auto* r : rows) {
    os << pad_right(r->method_name, 24) << pad_left(fixed(r->content_ssim, 3), 14)
       << pad_left(fixed(r->depth_ssim, 3), 16) << pad_left(fixed(r->edge_ssim, 3), 15)
       << pad_left(std::to_string(r->n_pairs), 7) << '\n';
  }
  for (const auto& c : kCitedStructure) {
    os << pad_right(std::string("[cited] ") + c.method, 24) << pad_left(fixed(c.content, 3), 14)
       << pad_left(fixed(c.depth, 3), 16) << pad_left(fixed(c.edge, 3), 15) << pad_left("-", 7)
       << '\n';
  }
  os << "[cited] rows are published full-scale results, shown for reference only.\n";
}

void speed_text(std::ostringstream& os, const std::vector<const SpeedReport*>& rows) {
  os << pad_right("Method", 24);
  for (const auto* r : rows) {
    os << pad_left(std::to_string(r->resolution) + "X" + std::to_string(r->resolution), 12);
  }
  os << '\n' << pad_right("ours mean (s)", 24);
  for (const auto* r : rows) os << pad_left(fixed(r->mean_seconds, 4), 12);
  os << '\n' << pad_right("ours std (s)", 24);
  for (const auto* r : rows) os << pad_left(fixed(r->std_seconds, 4), 12);
  os << '\n' << pad_right("timed runs", 24);
  for (const auto* r : rows) {
    os << pad_left(std::to_string(r->n_runs - r->warmup_runs) + "/" + std::to_string(r->n_runs), 12);
  }
  os << '\n';
  for (const auto& c : kCitedSpeed) {
    os << pad_right(std::string("[cited] ") + c.method, 24);
    for (const auto* r : rows) {
      if (r->resolution == 256) {
        os << pad_left(fixed(c.s256, 3), 12);
      } else if (r->resolution == 512) {
        os << pad_left(fixed(c.s512, 3), 12);
      } else {
        os << pad_left("-", 12);
      }
    }
    os << '\n';
  }
  if (!rows.empty()) os << "hardware: " << rows.front()->hardware_note << '\n';
  os << "[cited] rows are published timings on different hardware, not comparable.\n";
}

}  // namespace

std::string render_table(const std::vector<Report>& reports, TableFormat format) {
  require(!reports.empty(), ErrorCode::argument, "render_table: no reports");
  std::vector<const StructureReport*> structure;
  std::vector<const SpeedReport*> speed;
  for (const auto& r : reports) {
    if (const auto* s = std::get_if<StructureReport>(&r)) structure.push_back(s);
    if (const auto* s = std::get_if<SpeedReport>(&r)) speed.push_back(s);
  }
  std::ostringstream os;
  if (format == TableFormat::csv) {
    if (!structure.empty()) {
      os << kStructureHeader << '\n';
      for (const auto* r : structure) {
        os << csv_field(r->method_name) << ',' << num(r->content_ssim) << ','
           << num(r->depth_ssim) << ',' << num(r->edge_ssim) << ',' << r->n_pairs << '\n';
      }
    }
    if (!speed.empty()) {
      if (!structure.empty()) os << '\n';
      os << kSpeedHeader << '\n';
      for (const auto* r : speed) {
        os << r->resolution << ',' << num(r->mean_seconds) << ',' << num(r->std_seconds) << ','
           << r->n_runs << ',' << r->warmup_runs << ',' << csv_field(r->hardware_note) << '\n';
      }
    }
    return os.str();
  }
  if (!structure.empty()) structure_text(os, structure);
  if (!speed.empty()) {
    if (!structure.empty()) os << '\n';
    speed_text(os, speed);
  }
  return os.str();
}

namespace {

std::vector<std::vector<std::string>> csv_section(const std::string& csv, const std::string& header) {
  std::istringstream in(csv);
  std::string line;
  bool inside = false;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!inside) {
      inside = line == header;
      continue;
    }
    if (line.empty()) break;
    rows.push_back(split_csv_line(line));
  }
  require(inside, ErrorCode::argument, "csv: missing header '" + header + "'");
  return rows;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::argument, "csv: bad number '" + s + "'");
}

}  // namespace

std::vector<StructureReport> parse_structure_csv(const std::string& csv) {
  std::vector<StructureReport> out;
  for (const auto& f : csv_section(csv, kStructureHeader)) {
    require(f.size() == 5, ErrorCode::argument, "csv: structure row needs 5 fields");
    StructureReport r;
    r.method_name = f[0];
    r.content_ssim = to_double(f[1]);
    r.depth_ssim = to_double(f[2]);
    r.edge_ssim = to_double(f[3]);
    r.n_pairs = static_cast<int>(to_double(f[4]));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SpeedReport> parse_speed_csv(const std::string& csv) {
  std::vector<SpeedReport> out;
  for (const auto& f : csv_section(csv, kSpeedHeader)) {
    require(f.size() == 6, ErrorCode::argument, "csv: speed row needs 6 fields");
    SpeedReport r;
    r.resolution = static_cast<int>(to_double(f[0]));
    r.mean_seconds = to_double(f[1]);
    r.std_seconds = to_double(f[2]);
    r.n_runs = static_cast<int>(to_double(f[3]));
    r.warmup_runs = static_cast<int>(to_double(f[4]));
    r.hardware_note = f[5];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ldst
