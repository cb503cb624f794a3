#include "ldstyle/ldstyle.h"

#include <cstdio>
#include <filesystem>
#include <new>
#include <string>
#include <vector>

#include "core/archive.hpp"
#include "core/blas.hpp"
#include "core/controls.hpp"
#include "core/edges.hpp"
#include "core/evaluation.hpp"
#include "core/fsutil.hpp"
#include "core/imaging.hpp"
#include "core/synthetic.hpp"
#include "core/trainer.hpp"

namespace fs = std::filesystem;

struct ldst_buffer {
  std::vector<unsigned char> bytes;
};

struct ldst_image {
  ldst::Image img;
};

struct ldst_engine {
  ldst::TransferModel<float> model;
  ldst::Encoder<float> encoder;
  std::string hash;
};

struct ldst_train_config {
  ldst::TrainConfig cfg;
};

struct ldst_report {
  std::vector<ldst::Report> reports;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_warning;

ldst_status status_of(ldst::ErrorCode code) {
  switch (code) {
    case ldst::ErrorCode::argument: return LDST_ERR_ARGUMENT;
    case ldst::ErrorCode::dimension: return LDST_ERR_DIMENSION;
    case ldst::ErrorCode::decode: return LDST_ERR_DECODE;
    case ldst::ErrorCode::io: return LDST_ERR_IO;
    case ldst::ErrorCode::checkpoint_format: return LDST_ERR_CHECKPOINT_FORMAT;
    case ldst::ErrorCode::corrupt: return LDST_ERR_CORRUPT;
    case ldst::ErrorCode::backend_unavailable: return LDST_ERR_BACKEND_UNAVAILABLE;
    case ldst::ErrorCode::dataset: return LDST_ERR_DATASET;
    case ldst::ErrorCode::divergence: return LDST_ERR_DIVERGENCE;
    case ldst::ErrorCode::internal: return LDST_ERR_INTERNAL;
  }
  return LDST_ERR_INTERNAL;
}

template <typename F>
ldst_status guarded(F&& body) {
  try {
    body();
    return LDST_OK;
  } catch (const ldst::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return LDST_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return LDST_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return LDST_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return LDST_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) ldst::fail(ldst::ErrorCode::argument, std::string(what) + " must not be null");
}

std::string fnv1a_hex(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ldst_buffer* make_buffer(const std::string& s) {
  return new ldst_buffer{std::vector<unsigned char>(s.begin(), s.end())};
}

ldst::ControlWarning warning_sink() {
  return [](const std::string& msg) { g_last_warning = msg; };
}

ldst::TrainHooks to_hooks(const ldst_train_hooks* hooks) {
  ldst::TrainHooks h;
  if (!hooks) return h;
  const ldst_train_hooks copy = *hooks;
  if (copy.on_step) {
    h.on_step = [copy](std::int64_t it, const ldst::LossBreakdown& b) {
      const ldst_losses l{b.content, b.style, b.lap, b.depth, b.total};
      copy.on_step(it, &l, copy.user);
    };
  }
  if (copy.on_warning) {
    h.warn = [copy](const std::string& msg) { copy.on_warning(msg.c_str(), copy.user); };
  }
  if (copy.should_stop) {
    h.should_stop = [copy] { return copy.should_stop(copy.user) != 0; };
  }
  return h;
}

std::vector<ldst::Image> load_all(const std::vector<fs::path>& files) {
  std::vector<ldst::Image> out;
  for (const auto& f : files) out.push_back(ldst::load_image(f));
  return out;
}

std::vector<ldst::HeldOutPair> held_out_pairs(const fs::path& dir) {
  const auto content = load_all(ldst::list_images(dir / "content"));
  const auto style = load_all(ldst::list_images(dir / "style"));
  ldst::require(!content.empty() && !style.empty(), ldst::ErrorCode::dataset,
                "held-out set needs images in content/ and style/ under " + dir.string());
  std::vector<ldst::HeldOutPair> pairs;
  for (std::size_t i = 0; i < content.size(); ++i) pairs.push_back({content[i], style[i % style.size()]});
  return pairs;
}

}  // namespace

extern "C" {

const char* ldst_last_error(void) { return g_last_error.c_str(); }
const char* ldst_last_warning(void) { return g_last_warning.c_str(); }

const char* ldst_status_name(ldst_status status) {
  switch (status) {
    case LDST_OK: return "ok";
    case LDST_ERR_ARGUMENT: return "argument";
    case LDST_ERR_DIMENSION: return "dimension";
    case LDST_ERR_DECODE: return "decode";
    case LDST_ERR_IO: return "io";
    case LDST_ERR_CHECKPOINT_FORMAT: return "checkpoint-format";
    case LDST_ERR_CORRUPT: return "corrupt";
    case LDST_ERR_BACKEND_UNAVAILABLE: return "backend-unavailable";
    case LDST_ERR_DATASET: return "dataset";
    case LDST_ERR_DIVERGENCE: return "divergence";
    case LDST_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ldst_version(void) { return "0.1.0"; }

void ldst_set_threads(int threads) { ldst::set_blas_threads(threads); }

// ---- buffers ----

const unsigned char* ldst_buffer_data(const ldst_buffer* buf) { return buf ? buf->bytes.data() : nullptr; }
size_t ldst_buffer_size(const ldst_buffer* buf) { return buf ? buf->bytes.size() : 0; }
void ldst_buffer_free(ldst_buffer* buf) { delete buf; }

// ---- images ----

ldst_status ldst_image_load(const char* path, ldst_image** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ldst_image{ldst::load_image(path)};
  });
}

ldst_status ldst_image_decode(const unsigned char* bytes, size_t size, ldst_image** out) {
  return guarded([&] {
    need(out, "out");
    if (size > 0) need(bytes, "bytes");
    *out = new ldst_image{ldst::decode_image({bytes, size})};
  });
}

ldst_status ldst_image_create(int height, int width, const float* pixels, ldst_image** out) {
  return guarded([&] {
    need(out, "out");
    ldst::require(height > 0 && width > 0, ldst::ErrorCode::dimension, "image size must be positive");
    ldst::Image img(height, width);
    if (pixels) std::copy(pixels, pixels + img.tensor().size(), img.tensor().data.begin());
    *out = new ldst_image{std::move(img)};
  });
}

int ldst_image_height(const ldst_image* img) { return img ? img->img.height() : 0; }
int ldst_image_width(const ldst_image* img) { return img ? img->img.width() : 0; }
const float* ldst_image_pixels(const ldst_image* img) {
  return img ? img->img.tensor().data.data() : nullptr;
}

ldst_status ldst_image_encode(const ldst_image* img, ldst_format format, ldst_buffer** out) {
  return guarded([&] {
    need(img, "image");
    need(out, "out");
    const auto f = format == LDST_FORMAT_JPEG ? ldst::ImageFormat::jpeg : ldst::ImageFormat::png;
    *out = new ldst_buffer{ldst::encode_image(img->img, f)};
  });
}

ldst_status ldst_image_save(const ldst_image* img, const char* path) {
  return guarded([&] {
    need(img, "image");
    need(path, "path");
    ldst::save_image(img->img, path);
  });
}

void ldst_image_free(ldst_image* img) { delete img; }

// ---- engine ----

ldst_status ldst_engine_load(const char* checkpoint_path, ldst_engine** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint path");
    need(out, "out");
    const fs::path path(checkpoint_path);
    ldst::require(fs::is_regular_file(path), ldst::ErrorCode::io,
                  "checkpoint not found: " + path.string());
    const auto bytes = ldst::read_file(path);
    auto ck = ldst::checkpoint_from_archive(ldst::Archive::parse(bytes, path.string()));
    *out = new ldst_engine{std::move(ck.model), std::move(ck.encoder), fnv1a_hex(bytes)};
  });
}

ldst_status ldst_engine_random(int encoder_width_divisor, uint64_t seed, ldst_engine** out) {
  return guarded([&] {
    need(out, "out");
    ldst::require(encoder_width_divisor >= 1, ldst::ErrorCode::argument,
                  "width divisor must be >= 1");
    ldst::Checkpoint ck;
    ck.encoder = ldst::Encoder<float>::random(encoder_width_divisor, seed);
    ck.model = ldst::TransferModel<float>::shaped_for(ck.encoder);
    ck.model.initialize(seed + 1);
    ck.adam.m = ck.model.zeros_like();
    ck.adam.v = ck.model.zeros_like();
    const auto bytes = ldst::checkpoint_archive(ck).serialize();
    *out = new ldst_engine{std::move(ck.model), std::move(ck.encoder), fnv1a_hex(bytes)};
  });
}

const char* ldst_engine_hash(const ldst_engine* engine) { return engine ? engine->hash.c_str() : ""; }
void ldst_engine_free(ldst_engine* engine) { delete engine; }

ldst_status ldst_stylize(const ldst_engine* engine, const ldst_image* content,
                         const ldst_image* style, ldst_image** out) {
  return guarded([&] {
    need(engine, "engine");
    need(content, "content");
    need(style, "style");
    need(out, "out");
    *out = new ldst_image{ldst::stylize(engine->model, engine->encoder, content->img, style->img)};
  });
}

ldst_status ldst_stylize_alpha(const ldst_engine* engine, const ldst_image* content,
                               const ldst_image* style, double alpha, ldst_image** out) {
  return guarded([&] {
    need(engine, "engine");
    need(content, "content");
    need(style, "style");
    need(out, "out");
    g_last_warning.clear();
    *out = new ldst_image{ldst::stylize_with_alpha(engine->model, engine->encoder, content->img,
                                                   style->img, alpha, warning_sink())};
  });
}

ldst_status ldst_stylize_multi(const ldst_engine* engine, const ldst_image* content,
                               const ldst_image* const* styles, const double* weights,
                               size_t n_styles, ldst_image** out) {
  return guarded([&] {
    need(engine, "engine");
    need(content, "content");
    need(out, "out");
    ldst::require(n_styles >= 1, ldst::ErrorCode::argument, "at least one style is required");
    need(styles, "styles");
    ldst::StyleMix mix;
    for (size_t k = 0; k < n_styles; ++k) {
      need(styles[k], "style");
      mix.styles.push_back(styles[k]->img);
      mix.weights.push_back(weights ? weights[k] : 1.0);
    }
    *out = new ldst_image{ldst::stylize_multi(engine->model, engine->encoder, content->img, mix)};
  });
}

ldst_status ldst_stylize_spatial(const ldst_engine* engine, const ldst_image* content,
                                 const ldst_image* const* masks, const ldst_image* const* styles,
                                 size_t n_regions, ldst_image** out) {
  return guarded([&] {
    need(engine, "engine");
    need(content, "content");
    need(out, "out");
    std::vector<ldst::Region> regions;
    for (size_t k = 0; k < n_regions; ++k) {
      need(masks ? masks[k] : nullptr, "mask");
      need(styles ? styles[k] : nullptr, "style");
      regions.push_back({ldst::mask_from_image(masks[k]->img), styles[k]->img});
    }
    g_last_warning.clear();
    *out = new ldst_image{ldst::stylize_spatial(engine->model, engine->encoder, content->img,
                                                regions, warning_sink())};
  });
}

ldst_status ldst_stylize_request(const ldst_engine* engine, const ldst_request* request,
                                 ldst_image** out) {
  return guarded([&] {
    need(engine, "engine");
    need(request, "request");
    need(request->content, "content");
    need(out, "out");
    ldst::ControlRequest req;
    req.alpha = request->alpha;
    ldst::require(request->n_styles >= 1, ldst::ErrorCode::argument, "at least one style is required");
    need(request->styles, "styles");
    for (size_t k = 0; k < request->n_styles; ++k) {
      need(request->styles[k], "style");
      req.mix.styles.push_back(request->styles[k]->img);
      req.mix.weights.push_back(request->weights ? request->weights[k] : 1.0);
    }
    for (size_t k = 0; k < request->n_masks; ++k) {
      need(request->masks ? request->masks[k] : nullptr, "mask");
      need(request->mask_styles, "mask_styles");
      req.masks.push_back(ldst::mask_from_image(request->masks[k]->img));
      req.mask_styles.push_back(request->mask_styles[k]);
    }
    g_last_warning.clear();
    *out = new ldst_image{ldst::stylize_request(engine->model, engine->encoder,
                                                request->content->img, req, warning_sink())};
  });
}

// ---- training ----

ldst_status ldst_train_config_new(ldst_train_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new ldst_train_config{};
  });
}

ldst_status ldst_train_config_load(const char* path, ldst_train_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ldst_train_config{ldst::TrainConfig::load(path)};
  });
}

ldst_status ldst_train_config_set(ldst_train_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

ldst_status ldst_train_config_text(const ldst_train_config* cfg, ldst_buffer** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = make_buffer(cfg->cfg.to_text());
  });
}

void ldst_train_config_free(ldst_train_config* cfg) { delete cfg; }

ldst_status ldst_train(const ldst_train_config* cfg, const char* resume,
                       const ldst_train_hooks* hooks, int64_t* iteration) {
  return guarded([&] {
    need(cfg, "config");
    std::optional<ldst::Checkpoint> start;
    if (resume) {
      ldst::require(fs::is_regular_file(resume), ldst::ErrorCode::io,
                    std::string("checkpoint not found: ") + resume);
      start = ldst::load_checkpoint(resume);
    }
    const auto ck = ldst::train(cfg->cfg, to_hooks(hooks), std::move(start));
    if (iteration) *iteration = ck.iteration;
  });
}

ldst_status ldst_sweep(const ldst_train_config* cfg, const double* lap_values, size_t n_lap,
                       const double* depth_values, size_t n_depth, const char* heldout_dir,
                       const char* out_dir, const ldst_train_hooks* hooks, ldst_buffer** summary) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "out_dir");
    ldst::require(n_lap > 0 && n_depth > 0 && lap_values && depth_values, ldst::ErrorCode::argument,
                  "sweep needs at least one lap and one depth value");
    const std::vector<double> laps(lap_values, lap_values + n_lap);
    const std::vector<double> depths(depth_values, depth_values + n_depth);
    std::vector<ldst::HeldOutPair> held;
    if (heldout_dir) held = held_out_pairs(heldout_dir);
    const auto cells = ldst::ablation_sweep(cfg->cfg, laps, depths, held, out_dir, to_hooks(hooks));
    std::string csv = "lambda_lap,lambda_depth,checkpoint,content_ssim,depth_ssim,edge_ssim,error\n";
    char buf[256];
    for (const auto& c : cells) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", c.lap, c.depth);
      csv += buf;
      csv += c.checkpoint.string() + ",";
      if (c.report) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", c.report->content_ssim,
                      c.report->depth_ssim, c.report->edge_ssim);
        csv += buf;
      } else {
        csv += ",,,";
      }
      std::string err = c.error;
      for (auto& ch : err) {
        if (ch == ',' || ch == '\n') ch = ' ';
      }
      csv += err + "\n";
    }
    if (summary) *summary = make_buffer(csv);
  });
}

ldst_status ldst_write_random_encoder(const char* path, int width_divisor, uint64_t seed) {
  return guarded([&] {
    need(path, "path");
    ldst::write_random_encoder_archive(path, width_divisor, seed);
  });
}

ldst_status ldst_write_synthetic(const char* dir, int kind, int count, int height, int width,
                                 uint64_t seed) {
  return guarded([&] {
    need(dir, "dir");
    ldst::require(kind == 0 || kind == 1, ldst::ErrorCode::argument, "kind must be 0 or 1");
    ldst::write_synth_set(dir, kind == 0 ? ldst::SynthKind::content : ldst::SynthKind::style,
                          count, height, width, seed);
  });
}

// ---- evaluation ----

ldst_status ldst_evaluate_dir(const char* pairs_dir, const ldst_engine* engine,
                              const char* depth_backend, const char* edge_backend,
                              const char* method_name, ldst_report** out) {
  return guarded([&] {
    need(pairs_dir, "pairs_dir");
    need(out, "out");
    const fs::path dir(pairs_dir);
    ldst::require(fs::is_directory(dir / "content"), ldst::ErrorCode::dataset,
                  "missing content/ under " + dir.string());
    const auto content = load_all(ldst::list_images(dir / "content"));
    ldst::require(!content.empty(), ldst::ErrorCode::dataset, "no content images under " + dir.string());
    std::vector<ldst::StylizedPair> pairs;
    if (fs::is_directory(dir / "stylized")) {
      const auto stylized = load_all(ldst::list_images(dir / "stylized"));
      ldst::require(stylized.size() == content.size(), ldst::ErrorCode::dataset,
                    "content/ and stylized/ hold different image counts");
      for (std::size_t i = 0; i < content.size(); ++i) pairs.push_back({content[i], stylized[i]});
    } else {
      ldst::require(engine != nullptr, ldst::ErrorCode::argument,
                    "no stylized/ directory; a checkpoint is needed to stylize style/ pairs");
      for (const auto& p : held_out_pairs(dir)) {
        pairs.push_back({p.content, ldst::stylize(engine->model, engine->encoder, p.content, p.style)});
      }
    }
    const auto depth = ldst::make_depth_estimator<float>(
        ldst::parse_depth_backend(depth_backend ? depth_backend : "stub"));
    const auto edges = ldst::make_edge_detector(ldst::parse_edge_backend(edge_backend ? edge_backend : "sobel"));
    auto report = ldst::structure_consistency(pairs, *depth, *edges, method_name ? method_name : "ours");
    *out = new ldst_report{{std::move(report)}};
  });
}

ldst_status ldst_bench(const ldst_engine* engine, const int* resolutions, size_t n_resolutions,
                       int runs, int warmup, uint64_t seed, ldst_report** out) {
  return guarded([&] {
    need(engine, "engine");
    need(out, "out");
    ldst::require(resolutions && n_resolutions > 0, ldst::ErrorCode::argument, "no resolutions");
    const std::vector<int> res(resolutions, resolutions + n_resolutions);
    auto reports = ldst::speed_benchmark(engine->model, engine->encoder, res, runs, warmup, seed);
    auto* r = new ldst_report{};
    for (auto& s : reports) r->reports.emplace_back(std::move(s));
    *out = r;
  });
}

ldst_status ldst_report_structure(const ldst_report* report, ldst_structure_scores* out) {
  return guarded([&] {
    need(report, "report");
    need(out, "out");
    for (const auto& r : report->reports) {
      if (const auto* s = std::get_if<ldst::StructureReport>(&r)) {
        *out = {s->content_ssim, s->depth_ssim, s->edge_ssim, s->n_pairs};
        return;
      }
    }
    ldst::fail(ldst::ErrorCode::argument, "report holds no structure scores");
  });
}

ldst_status ldst_report_render(const ldst_report* report, int as_csv, ldst_buffer** out) {
  return guarded([&] {
    need(report, "report");
    need(out, "out");
    *out = make_buffer(ldst::render_table(report->reports,
                                          as_csv ? ldst::TableFormat::csv : ldst::TableFormat::text));
  });
}

ldst_status ldst_report_raw_log(const ldst_report* report, ldst_buffer** out) {
  return guarded([&] {
    need(report, "report");
    need(out, "out");
    std::vector<ldst::SpeedReport> speed;
    for (const auto& r : report->reports) {
      if (const auto* s = std::get_if<ldst::SpeedReport>(&r)) speed.push_back(*s);
    }
    *out = make_buffer(ldst::raw_timing_log(speed));
  });
}

void ldst_report_free(ldst_report* report) { delete report; }

}  // extern "C"
