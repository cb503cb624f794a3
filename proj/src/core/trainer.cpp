#include "core/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "core/fsutil.hpp"

namespace ldst {

namespace fs = std::filesystem;

// ---- config ---------------------------------------------------------------

void TrainConfig::validate() const {
  require(learning_rate > 0 && std::isfinite(learning_rate), ErrorCode::argument,
          "learning_rate must be > 0");
  require(batch_size >= 1, ErrorCode::argument, "batch_size must be >= 1");
  require(crop_size >= 16 && crop_size % 16 == 0, ErrorCode::argument,
          "crop_size must be a positive multiple of 16");
  require(crop_size <= resize_target, ErrorCode::argument, "crop_size must be <= resize_target");
  require(max_iterations >= 0, ErrorCode::argument, "max_iterations must be >= 0");
  require(checkpoint_every >= 0, ErrorCode::argument, "checkpoint_every must be >= 0");
  require(encoder_width_divisor >= 1, ErrorCode::argument, "encoder_width_divisor must be >= 1");
  weights.validate();
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::argument, "config: " + key + " expects a number, got '" + v + "'");
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc{} && ptr == v.data() + v.size(), ErrorCode::argument,
          "config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "content_dir=" << content_dir.string() << '\n'
     << "style_dir=" << style_dir.string() << '\n'
     << "learning_rate=" << fmt_double(learning_rate) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "resize_target=" << resize_target << '\n'
     << "crop_size=" << crop_size << '\n'
     << "max_iterations=" << max_iterations << '\n'
     << "lambda_content=" << fmt_double(weights.content) << '\n'
     << "lambda_style=" << fmt_double(weights.style) << '\n'
     << "lambda_lap=" << fmt_double(weights.lap) << '\n'
     << "lambda_depth=" << fmt_double(weights.depth) << '\n'
     << "seed=" << seed << '\n'
     << "depth_backend=" << depth_backend_name(depth_backend) << '\n';
  if (depth_backend.weights_path) os << "depth_weights=" << depth_backend.weights_path->string() << '\n';
  os << "checkpoint_every=" << checkpoint_every << '\n'
     << "encoder=" << encoder_path.string() << '\n'
     << "encoder_width_divisor=" << encoder_width_divisor << '\n'
     << "encoder_seed=" << encoder_seed << '\n'
     << "checkpoint=" << checkpoint_path.string() << '\n'
     << "log=" << log_path.string() << '\n';
  return os.str();
}

void TrainConfig::set(const std::string& k, const std::string& v) {
  if (k == "content_dir") content_dir = v;
  else if (k == "style_dir") style_dir = v;
  else if (k == "learning_rate") learning_rate = parse_double(k, v);
  else if (k == "batch_size") batch_size = parse_int<int>(k, v);
  else if (k == "resize_target") resize_target = parse_int<int>(k, v);
  else if (k == "crop_size") crop_size = parse_int<int>(k, v);
  else if (k == "max_iterations") max_iterations = parse_int<std::int64_t>(k, v);
  else if (k == "lambda_content") weights.content = parse_double(k, v);
  else if (k == "lambda_style") weights.style = parse_double(k, v);
  else if (k == "lambda_lap") weights.lap = parse_double(k, v);
  else if (k == "lambda_depth") weights.depth = parse_double(k, v);
  else if (k == "seed") seed = parse_int<std::uint64_t>(k, v);
  else if (k == "depth_backend") {
    auto w = depth_backend.weights_path;
    depth_backend = parse_depth_backend(v);
    depth_backend.weights_path = w;
  } else if (k == "depth_weights") {
    if (v.empty()) depth_backend.weights_path.reset();
    else depth_backend.weights_path = fs::path(v);
  } else if (k == "checkpoint_every") checkpoint_every = parse_int<std::int64_t>(k, v);
  else if (k == "encoder") encoder_path = v;
  else if (k == "encoder_width_divisor") encoder_width_divisor = parse_int<int>(k, v);
  else if (k == "encoder_seed") encoder_seed = parse_int<std::uint64_t>(k, v);
  else if (k == "checkpoint") checkpoint_path = v;
  else if (k == "log") log_path = v;
  else fail(ErrorCode::argument, "config: unknown key '" + k + "'");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  for (const auto& [k, v] : parse_key_values(text)) c.set(k, v);
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::io, "config file not found: " + path.string());
  const auto bytes = read_file(path);
  TrainConfig c = parse(std::string(bytes.begin(), bytes.end()));
  // Relative paths are taken relative to the config file.
  const fs::path base = path.parent_path();
  auto rebase = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  rebase(c.content_dir);
  rebase(c.style_dir);
  rebase(c.encoder_path);
  rebase(c.checkpoint_path);
  rebase(c.log_path);
  if (c.depth_backend.weights_path) rebase(*c.depth_backend.weights_path);
  return c;
}

// ---- data -----------------------------------------------------------------

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::dataset, "not a directory: " + dir.string());
  static const std::set<std::string> kExt{".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm", ".tif", ".tiff", ".webp"};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (kExt.count(ext)) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

PairStream::PairStream(const TrainConfig& cfg, WarningSink warn)
    : cfg_(cfg), warn_(std::move(warn)), rng_(cfg.seed) {
  cfg_.validate();
  content_.label = "content";
  style_.label = "style";
  content_.files = list_images(cfg.content_dir);
  style_.files = list_images(cfg.style_dir);
  require(!content_.files.empty(), ErrorCode::dataset,
          "no images in content directory " + cfg.content_dir.string());
  require(!style_.files.empty(), ErrorCode::dataset,
          "no images in style directory " + cfg.style_dir.string());
}

Tensor<float> PairStream::draw(Side& side) {
  for (;;) {
    require(!side.files.empty(), ErrorCode::dataset, "no decodable " + side.label + " images left");
    if (side.cursor >= side.order.size()) {
      side.order.resize(side.files.size());
      std::iota(side.order.begin(), side.order.end(), std::size_t{0});
      std::shuffle(side.order.begin(), side.order.end(), rng_);
      side.cursor = 0;
    }
    const std::size_t idx = side.order[side.cursor++];
    const fs::path path = side.files[idx];
    try {
      Image img = resize_smaller_dim(load_image(path), cfg_.resize_target);
      return random_crop(img, cfg_.crop_size, rng_).tensor();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::decode && e.code() != ErrorCode::io) throw;
      if (warn_) warn_("skipping unreadable " + side.label + " image " + path.string() + ": " + e.what());
      side.files.erase(side.files.begin() + static_cast<std::ptrdiff_t>(idx));
      side.order.clear();
      side.cursor = 0;
    }
  }
}

Batch PairStream::next() {
  Batch b;
  for (int i = 0; i < cfg_.batch_size; ++i) {
    b.content.push_back(draw(content_));
    b.style.push_back(draw(style_));
  }
  return b;
}

// ---- optimiser ------------------------------------------------------------

void adam_update(TransferModel<float>& model, const TransferModel<float>& grads, AdamState& state,
                 double learning_rate) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto params = model.parameters();
  const auto g = grads.parameters();
  auto m = state.m.parameters();
  auto v = state.v.parameters();
  auto step = [&](std::vector<float>& p, const std::vector<float>& gp, std::vector<float>& mp,
                  std::vector<float>& vp) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = gp[i];
      mp[i] = static_cast<float>(state.beta1 * mp[i] + (1.0 - state.beta1) * gi);
      vp[i] = static_cast<float>(state.beta2 * vp[i] + (1.0 - state.beta2) * gi * gi);
      const double mhat = mp[i] / bc1;
      const double vhat = vp[i] / bc2;
      p[i] = static_cast<float>(p[i] - learning_rate * mhat / (std::sqrt(vhat) + state.eps));
    }
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    step(params[k].second->weight, g[k].second->weight, m[k].second->weight, v[k].second->weight);
    step(params[k].second->bias, g[k].second->bias, m[k].second->bias, v[k].second->bias);
  }
}

// ---- checkpoints ----------------------------------------------------------

Archive checkpoint_archive(const Checkpoint& ckpt) {
  Archive a;
  a.schema_version = ckpt.schema_version;
  ckpt.model.write_to(a, "model.");
  ckpt.encoder.write_to(a, "encoder.");
  ckpt.adam.m.write_to(a, "adam.m.");
  ckpt.adam.v.write_to(a, "adam.v.");
  const std::int64_t step = ckpt.adam.step;
  a.put_i64("adam.step", std::span(&step, 1), {1});
  const double betas[3] = {ckpt.adam.beta1, ckpt.adam.beta2, ckpt.adam.eps};
  a.put_f64("adam.hyper", betas, {3});
  const std::int64_t it = ckpt.iteration;
  a.put_i64("iteration", std::span(&it, 1), {1});
  a.text = ckpt.config_text;
  return a;
}

Checkpoint checkpoint_from_archive(const Archive& a) {
  Checkpoint c;
  c.schema_version = a.schema_version;
  c.model = TransferModel<float>::from_archive(a, "model.");
  c.encoder = Encoder<float>::from_archive(a, "encoder.");
  if (a.contains("adam.step")) {
    c.adam.m = TransferModel<float>::from_archive(a, "adam.m.");
    c.adam.v = TransferModel<float>::from_archive(a, "adam.v.");
    c.adam.step = a.get("adam.step").as_i64().at(0);
    const auto hyper = a.get("adam.hyper").as_f64();
    require(hyper.size() == 3, ErrorCode::checkpoint_format, "adam.hyper must hold 3 values");
    c.adam.beta1 = hyper[0];
    c.adam.beta2 = hyper[1];
    c.adam.eps = hyper[2];
  } else {
    c.adam.m = c.model.zeros_like();
    c.adam.v = c.model.zeros_like();
  }
  c.iteration = a.contains("iteration") ? a.get("iteration").as_i64().at(0) : 0;
  c.config_text = a.text;
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  checkpoint_archive(ckpt).save(path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  return checkpoint_from_archive(Archive::load(path));
}

Encoder<float> make_encoder(const TrainConfig& cfg) {
  if (!cfg.encoder_path.empty()) return Encoder<float>::load(cfg.encoder_path);
  return Encoder<float>::random(cfg.encoder_width_divisor, cfg.encoder_seed);
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  Checkpoint c;
  c.encoder = make_encoder(cfg);
  c.model = TransferModel<float>::shaped_for(c.encoder);
  c.model.initialize(cfg.seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
  c.adam.m = c.model.zeros_like();
  c.adam.v = c.model.zeros_like();
  c.config_text = cfg.to_text();
  return c;
}

// ---- training -------------------------------------------------------------

LossBreakdown train_step(TransferModel<float>& model, const Encoder<float>& encoder,
                         const DepthEstimator<float>* depth, const Batch& batch,
                         const TrainConfig& cfg, AdamState& adam, std::int64_t iteration) {
  require(batch.content.size() == batch.style.size() && !batch.content.empty(),
          ErrorCode::argument, "train_step: malformed batch");
  TransferModel<float> grads = model.zeros_like();
  LossBreakdown mean;
  const double n = static_cast<double>(batch.content.size());
  for (std::size_t i = 0; i < batch.content.size(); ++i) {
    const auto& content = batch.content[i];
    const auto& style = batch.style[i];
    const auto cf = encoder.extract(content, kContentLayers);
    const auto sf = encoder.extract(style, kStyleLayers);
    require(cf.pad_bottom == 0 && cf.pad_right == 0, ErrorCode::argument,
            "train_step: crops must be multiples of 16");
    ForwardTape<float> tape;
    const Tensor<float> fused = model.fuse(cf, sf, &tape);
    const Tensor<float> out = model.decode_raw(fused, &tape.decoder);
    const auto targets = make_targets(encoder, depth, content, style, &cf, &sf);
    const auto res = evaluate_objective(encoder, depth, out, targets, cfg.weights, true);
    if (!std::isfinite(res.breakdown.total)) {
      throw DivergenceError(iteration, "non-finite loss at iteration " + std::to_string(iteration));
    }
    const Tensor<float> grad_fused = model.decoder_backward(tape.decoder, res.grad, grads);
    model.fuse_backward(tape, grad_fused, grads);
    mean.content += res.breakdown.content / n;
    mean.style += res.breakdown.style / n;
    mean.lap += res.breakdown.lap / n;
    mean.depth += res.breakdown.depth / n;
    mean.total += res.breakdown.total / n;
  }
  const float inv = static_cast<float>(1.0 / n);
  for (auto& [name, p] : grads.parameters()) {
    for (auto& w : p->weight) w *= inv;
    for (auto& b : p->bias) b *= inv;
  }
  adam_update(model, grads, adam, cfg.learning_rate);
  return mean;
}

namespace {

std::string log_row(std::int64_t it, const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(it),
                b.content, b.style, b.lap, b.depth, b.total);
  return buf;
}

constexpr const char* kLogHeader = "iteration,content,style,lap,depth,total\n";

}  // namespace

Checkpoint train(const TrainConfig& cfg, const TrainHooks& hooks, std::optional<Checkpoint> start) {
  cfg.validate();
  Checkpoint ck = start ? std::move(*start) : initial_checkpoint(cfg);
  ck.config_text = cfg.to_text();
  const auto depth = make_depth_estimator<float>(cfg.depth_backend);
  std::optional<PairStream> stream;  // opened lazily so zero-step runs need no data

  std::string log = kLogHeader;
  if (start && !cfg.log_path.empty() && fs::exists(cfg.log_path)) {
    const auto bytes = read_file(cfg.log_path);
    log.assign(bytes.begin(), bytes.end());
  }
  auto persist = [&] {
    if (!cfg.checkpoint_path.empty()) {
      if (cfg.checkpoint_path.has_parent_path()) fs::create_directories(cfg.checkpoint_path.parent_path());
      save_checkpoint(ck, cfg.checkpoint_path);
    }
    if (!cfg.log_path.empty()) {
      if (cfg.log_path.has_parent_path()) fs::create_directories(cfg.log_path.parent_path());
      write_text_atomic(cfg.log_path, log);
    }
  };

  try {
    while (ck.iteration < cfg.max_iterations) {
      if (hooks.should_stop && hooks.should_stop()) break;
      if (!stream) stream.emplace(cfg, hooks.warn);
      const Batch batch = stream->next();
      const std::int64_t it = ck.iteration + 1;
      const LossBreakdown b = train_step(ck.model, ck.encoder, depth.get(), batch, cfg, ck.adam, it);
      ck.iteration = it;
      log += log_row(it, b);
      if (hooks.on_step) hooks.on_step(it, b);
      if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) persist();
    }
  } catch (const DivergenceError&) {
    // Keep the last good checkpoint on disk; only the log is refreshed.
    if (!cfg.log_path.empty()) write_text_atomic(cfg.log_path, log);
    throw;
  }
  persist();
  return ck;
}

std::string cell_name(double lap, double depth) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "cell_lap%g_depth%g", lap, depth);
  return buf;
}

std::vector<SweepCell> ablation_sweep(const TrainConfig& cfg, const std::vector<double>& lap_values,
                                      const std::vector<double>& depth_values,
                                      const std::vector<HeldOutPair>& held_out,
                                      const fs::path& out_dir, const TrainHooks& hooks) {
  require(!lap_values.empty() && !depth_values.empty(), ErrorCode::argument,
          "sweep: value lists must be nonempty");
  std::vector<SweepCell> cells;
  for (double lap : lap_values) {
    for (double dep : depth_values) {
      SweepCell cell;
      cell.lap = lap;
      cell.depth = dep;
      const fs::path dir = out_dir / cell_name(lap, dep);
      cell.checkpoint = dir / "checkpoint.ld";
      try {
        TrainConfig c = cfg;
        c.weights.lap = lap;
        c.weights.depth = dep;
        c.checkpoint_path = cell.checkpoint;
        c.log_path = dir / "log.csv";
        const Checkpoint ck = train(c, hooks);
        if (!held_out.empty()) {
          std::vector<StylizedPair> pairs;
          for (const auto& p : held_out) {
            pairs.push_back({p.content, stylize(ck.model, ck.encoder, p.content, p.style)});
          }
          const auto depth = make_depth_estimator<float>(cfg.depth_backend);
          cell.report = structure_consistency(pairs, *depth, SobelEdges{}, cell_name(lap, dep));
          write_text_atomic(dir / "report.csv", render_table({*cell.report}, TableFormat::csv));
        }
      } catch (const std::exception& e) {
        cell.error = e.what();
        if (hooks.warn) hooks.warn(cell_name(lap, dep) + " failed: " + e.what());
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace ldst
