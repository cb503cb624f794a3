// ldstyle command-line tool. Everything goes through the C API.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ldstyle/ldstyle.h"
#include "service/service.hpp"

namespace {

// Exit codes: 0 ok, 1 user error, 2 internal error.
constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(ldst_status s) {
  return (s == LDST_ERR_INTERNAL || s == LDST_ERR_DIVERGENCE) ? kExitInternal : kExitUser;
}

void check(ldst_status s, const std::string& context = {}) {
  if (s == LDST_OK) return;
  std::string msg = std::string(ldst_status_name(s)) + " error: " + ldst_last_error();
  if (!context.empty()) msg = context + ": " + msg;
  throw Failure{exit_code_for(s), msg};
}

void user_error(const std::string& msg) { throw Failure{kExitUser, msg}; }

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : ptr(o.ptr) { o.ptr = nullptr; }
  Handle& operator=(Handle&& o) noexcept {
    if (this != &o) {
      if (ptr) Free(ptr);
      ptr = o.ptr;
      o.ptr = nullptr;
    }
    return *this;
  }
  ~Handle() {
    if (ptr) Free(ptr);
  }
  T* get() const { return ptr; }
  T** out() { return &ptr; }
  T* release() {
    T* p = ptr;
    ptr = nullptr;
    return p;
  }
};
using Image = Handle<ldst_image, ldst_image_free>;
using Engine = Handle<ldst_engine, ldst_engine_free>;
using Buffer = Handle<ldst_buffer, ldst_buffer_free>;
using Config = Handle<ldst_train_config, ldst_train_config_free>;
using Report = Handle<ldst_report, ldst_report_free>;

Image load_image(const std::string& path) {
  Image img;
  check(ldst_image_load(path.c_str(), img.out()));
  return img;
}

Engine load_engine(const std::string& path) {
  Engine e;
  check(ldst_engine_load(path.c_str(), e.out()));
  return e;
}

void save(const Image& img, const std::string& path) { check(ldst_image_save(img.get(), path.c_str())); }

std::string buffer_text(const Buffer& b) {
  return std::string(reinterpret_cast<const char*>(ldst_buffer_data(b.get())), ldst_buffer_size(b.get()));
}

// Temp file + rename, same as the library's image writes.
void write_text(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) user_error("cannot write " + path);
    out << text;
    if (!out.flush()) user_error("cannot write " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    user_error("cannot write " + path);
  }
}

// "a.png:0.25" -> ("a.png", 0.25). Splits on the last colon.
std::pair<std::string, std::string> split_pair(const std::string& spec, const char* flag) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
    user_error(std::string(flag) + " expects A:B, got '" + spec + "'");
  }
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

double parse_double(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  user_error(std::string(what) + ": not a number: '" + text + "'");
  return 0;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, what));
  if (out.empty()) user_error(std::string(what) + ": empty list");
  return out;
}

volatile std::sig_atomic_t g_interrupted = 0;
extern "C" void on_sigint(int) { g_interrupted = 1; }

struct TrainOutput {
  int every = 10;
  bool quiet = false;
};

void print_step(int64_t it, const ldst_losses* l, void* user) {
  const auto* o = static_cast<const TrainOutput*>(user);
  if (o->quiet || (o->every > 0 && it % o->every != 0 && it != 1)) return;
  std::printf("iter %lld  content %.5f  style %.5f  lap %.5f  depth %.5f  total %.5f\n",
              static_cast<long long>(it), l->content, l->style, l->lap, l->depth, l->total);
  std::fflush(stdout);
}

void print_warning(const char* msg, void*) { std::fprintf(stderr, "warning: %s\n", msg); }

int stop_requested(void*) { return g_interrupted ? 1 : 0; }

Config load_config(const std::string& path, const std::vector<std::string>& overrides,
                   const std::optional<uint64_t>& seed) {
  Config cfg;
  check(ldst_train_config_load(path.c_str(), cfg.out()));
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) user_error("--set expects key=value, got '" + kv + "'");
    check(ldst_train_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
          "--set " + kv);
  }
  if (seed) check(ldst_train_config_set(cfg.get(), "seed", std::to_string(*seed).c_str()));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ldstyle: structure-preserving arbitrary style transfer"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "BLAS threads (0 = library default)");

  // train
  auto* train = app.add_subcommand("train", "Train a transfer model from a run config");
  std::string train_config, train_resume;
  std::vector<std::string> train_set;
  std::optional<uint64_t> train_seed;
  TrainOutput train_out;
  train->add_option("--config", train_config, "key=value run config")->required();
  train->add_option("--set", train_set, "override a config key (key=value), repeatable");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_option("--seed", train_seed, "run seed (overrides the config)");
  train->add_option("--print-every", train_out.every, "print losses every N iterations");
  train->add_flag("--quiet", train_out.quiet, "no per-step output");

  // stylize
  auto* sty = app.add_subcommand("stylize", "Stylize one content image");
  std::string sty_content, sty_style, sty_out, sty_ckpt;
  double sty_alpha = 1.0;
  sty->add_option("-c,--content", sty_content, "content image")->required();
  sty->add_option("-s,--style", sty_style, "style image")->required();
  sty->add_option("-o,--output", sty_out, "output image (.png or .jpg)")->required();
  sty->add_option("--ckpt", sty_ckpt, "checkpoint")->required();
  sty->add_option("--alpha", sty_alpha, "content-style trade-off in [0,1]");

  // interpolate
  auto* interp = app.add_subcommand("interpolate", "Blend several styles");
  std::string in_content, in_out, in_ckpt;
  std::vector<std::string> in_styles;
  double in_alpha = 1.0;
  interp->add_option("-c,--content", in_content, "content image")->required();
  interp->add_option("--style", in_styles, "style.png:weight, repeatable")->required();
  interp->add_option("-o,--output", in_out, "output image")->required();
  interp->add_option("--ckpt", in_ckpt, "checkpoint")->required();
  interp->add_option("--alpha", in_alpha, "content-style trade-off in [0,1]");

  // mask-stylize
  auto* mask = app.add_subcommand("mask-stylize", "Different styles in masked regions");
  std::string mk_content, mk_out, mk_ckpt;
  std::vector<std::string> mk_regions;
  mask->add_option("-c,--content", mk_content, "content image")->required();
  mask->add_option("--region", mk_regions, "mask.png:style.png, repeatable")->required();
  mask->add_option("-o,--output", mk_out, "output image")->required();
  mask->add_option("--ckpt", mk_ckpt, "checkpoint")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Ablation grid over the structure-loss weights");
  std::string sw_config, sw_lap = "0,0.1", sw_depth = "0,20", sw_heldout, sw_out = "sweep", sw_summary;
  std::vector<std::string> sw_set;
  std::optional<uint64_t> sw_seed;
  sweep->add_option("--config", sw_config, "key=value run config")->required();
  sweep->add_option("--set", sw_set, "override a config key (key=value), repeatable");
  sweep->add_option("--lap", sw_lap, "comma-separated lambda_lap values");
  sweep->add_option("--depth", sw_depth, "comma-separated lambda_depth values");
  sweep->add_option("--heldout", sw_heldout, "directory with content/ and style/ held-out images");
  sweep->add_option("--out", sw_out, "output directory");
  sweep->add_option("--summary", sw_summary, "write the CSV summary here too");
  sweep->add_option("--seed", sw_seed, "run seed (overrides the config)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Structure-consistency SSIM report");
  std::string ev_pairs, ev_out, ev_ckpt, ev_depth = "stub", ev_edge = "sobel", ev_method = "ours";
  eval->add_option("--pairs-dir", ev_pairs, "directory with content/ and stylized/ (or style/)")->required();
  eval->add_option("--out", ev_out, "CSV report path");
  eval->add_option("--ckpt", ev_ckpt, "checkpoint used when pairs need stylizing");
  eval->add_option("--depth-backend", ev_depth, "stub | monodepth");
  eval->add_option("--edge-backend", ev_edge, "sobel | hed");
  eval->add_option("--method", ev_method, "row label");

  // bench
  auto* bench = app.add_subcommand("bench", "Time end-to-end stylization");
  std::string bn_ckpt, bn_res = "256,512", bn_out, bn_raw;
  int bn_runs = 30, bn_warmup = 5, bn_divisor = 1;
  uint64_t bn_seed = 0;
  bench->add_option("--ckpt", bn_ckpt, "checkpoint (default: random weights)");
  bench->add_option("--width-divisor", bn_divisor, "encoder width divisor for random weights");
  bench->add_option("--resolutions", bn_res, "comma-separated square sizes");
  bench->add_option("--runs", bn_runs, "runs per resolution, warmup included (>= 10)");
  bench->add_option("--warmup", bn_warmup, "untimed leading runs");
  bench->add_option("--seed", bn_seed, "seed for inputs and random weights");
  bench->add_option("--out", bn_out, "CSV report path");
  bench->add_option("--raw-log", bn_raw, "per-run timing CSV");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  std::string sv_ckpt, sv_host = "127.0.0.1", sv_origin;
  int sv_port = 8080, sv_workers = 2, sv_queue = 16, sv_payload_mb = 16;
  serve->add_option("--ckpt", sv_ckpt, "checkpoint")->required();
  serve->add_option("--host", sv_host, "bind address");
  serve->add_option("--port", sv_port, "port (0 = any free port)");
  serve->add_option("--workers", sv_workers, "inference worker threads");
  serve->add_option("--max-queue", sv_queue, "queued requests before 503");
  serve->add_option("--max-payload-mb", sv_payload_mb, "request size limit in MB");
  serve->add_option("--allow-origin", sv_origin, "CORS origin for browser clients");

  // helpers
  auto* init_enc = app.add_subcommand("init-encoder", "Write a seeded random encoder archive");
  std::string ie_out;
  int ie_divisor = 1;
  uint64_t ie_seed = 0;
  init_enc->add_option("--out", ie_out, "output archive")->required();
  init_enc->add_option("--width-divisor", ie_divisor, "divide every layer width by this");
  init_enc->add_option("--seed", ie_seed, "seed");

  auto* synth = app.add_subcommand("synth", "Write a procedural image set");
  std::string sy_out, sy_kind = "content";
  int sy_count = 8, sy_size = 256;
  uint64_t sy_seed = 0;
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->add_option("--kind", sy_kind, "content | style");
  synth->add_option("--count", sy_count, "number of images");
  synth->add_option("--size", sy_size, "square size in pixels");
  synth->add_option("--seed", sy_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    if (threads > 0) ldst_set_threads(threads);

    if (*train) {
      Config cfg = load_config(train_config, train_set, train_seed);
      std::signal(SIGINT, on_sigint);
      const ldst_train_hooks hooks{print_step, print_warning, stop_requested, &train_out};
      int64_t iterations = 0;
      check(ldst_train(cfg.get(), train_resume.empty() ? nullptr : train_resume.c_str(), &hooks,
                       &iterations));
      std::printf("trained %lld iterations\n", static_cast<long long>(iterations));
    } else if (*sty) {
      Engine engine = load_engine(sty_ckpt);
      Image content = load_image(sty_content);
      Image style = load_image(sty_style);
      Image out;
      check(ldst_stylize_alpha(engine.get(), content.get(), style.get(), sty_alpha, out.out()));
      if (*ldst_last_warning()) std::fprintf(stderr, "warning: %s\n", ldst_last_warning());
      save(out, sty_out);
    } else if (*interp) {
      Engine engine = load_engine(in_ckpt);
      Image content = load_image(in_content);
      std::vector<Image> styles;
      std::vector<const ldst_image*> ptrs;
      std::vector<double> weights;
      for (const auto& spec : in_styles) {
        const auto [path, w] = split_pair(spec, "--style");
        styles.push_back(load_image(path));
        weights.push_back(parse_double(w, "--style weight"));
      }
      for (const auto& s : styles) ptrs.push_back(s.get());
      const ldst_request req{content.get(), ptrs.data(), weights.data(), ptrs.size(), in_alpha,
                             nullptr, nullptr, 0};
      Image out;
      check(ldst_stylize_request(engine.get(), &req, out.out()));
      if (*ldst_last_warning()) std::fprintf(stderr, "warning: %s\n", ldst_last_warning());
      save(out, in_out);
    } else if (*mask) {
      Engine engine = load_engine(mk_ckpt);
      Image content = load_image(mk_content);
      std::vector<Image> masks, styles;
      for (const auto& spec : mk_regions) {
        const auto [m, s] = split_pair(spec, "--region");
        masks.push_back(load_image(m));
        styles.push_back(load_image(s));
      }
      std::vector<const ldst_image*> mp, sp;
      for (const auto& m : masks) mp.push_back(m.get());
      for (const auto& s : styles) sp.push_back(s.get());
      Image out;
      check(ldst_stylize_spatial(engine.get(), content.get(), mp.data(), sp.data(), mp.size(), out.out()));
      if (*ldst_last_warning()) std::fprintf(stderr, "warning: %s\n", ldst_last_warning());
      save(out, mk_out);
    } else if (*sweep) {
      Config cfg = load_config(sw_config, sw_set, sw_seed);
      const auto laps = parse_list(sw_lap, "--lap");
      const auto depths = parse_list(sw_depth, "--depth");
      TrainOutput quiet{0, true};
      const ldst_train_hooks hooks{print_step, print_warning, stop_requested, &quiet};
      std::signal(SIGINT, on_sigint);
      Buffer summary;
      check(ldst_sweep(cfg.get(), laps.data(), laps.size(), depths.data(), depths.size(),
                       sw_heldout.empty() ? nullptr : sw_heldout.c_str(), sw_out.c_str(), &hooks,
                       summary.out()));
      const std::string csv = buffer_text(summary);
      std::fputs(csv.c_str(), stdout);
      if (!sw_summary.empty()) write_text(sw_summary, csv);
    } else if (*eval) {
      Engine engine;
      if (!ev_ckpt.empty()) engine = load_engine(ev_ckpt);
      Report report;
      check(ldst_evaluate_dir(ev_pairs.c_str(), engine.get(), ev_depth.c_str(), ev_edge.c_str(),
                              ev_method.c_str(), report.out()));
      Buffer text, csv;
      check(ldst_report_render(report.get(), 0, text.out()));
      std::fputs(buffer_text(text).c_str(), stdout);
      if (!ev_out.empty()) {
        check(ldst_report_render(report.get(), 1, csv.out()));
        write_text(ev_out, buffer_text(csv));
      }
    } else if (*bench) {
      Engine engine;
      if (bn_ckpt.empty()) {
        check(ldst_engine_random(bn_divisor, bn_seed, engine.out()));
      } else {
        engine = load_engine(bn_ckpt);
      }
      std::vector<int> res;
      for (double r : parse_list(bn_res, "--resolutions")) res.push_back(static_cast<int>(r));
      Report report;
      check(ldst_bench(engine.get(), res.data(), res.size(), bn_runs, bn_warmup, bn_seed, report.out()));
      Buffer text;
      check(ldst_report_render(report.get(), 0, text.out()));
      std::fputs(buffer_text(text).c_str(), stdout);
      if (!bn_out.empty()) {
        Buffer csv;
        check(ldst_report_render(report.get(), 1, csv.out()));
        write_text(bn_out, buffer_text(csv));
      }
      if (!bn_raw.empty()) {
        Buffer raw;
        check(ldst_report_raw_log(report.get(), raw.out()));
        write_text(bn_raw, buffer_text(raw));
      }
    } else if (*serve) {
      ldst_service::ServiceOptions opts;
      opts.checkpoint = sv_ckpt;
      opts.workers = sv_workers;
      opts.max_queue = sv_queue;
      opts.max_payload = static_cast<std::size_t>(sv_payload_mb) << 20;
      opts.allow_origin = sv_origin;
      std::unique_ptr<ldst_service::Service> service;
      try {
        service = std::make_unique<ldst_service::Service>(opts);
      } catch (const ldst_service::ServiceError& e) {
        throw Failure{exit_code_for(e.status()), e.what()};
      }
      const int port = service->bind(sv_host, sv_port);
      if (port < 0) user_error("cannot bind " + sv_host + ":" + std::to_string(sv_port));
      std::printf("listening on http://%s:%d (checkpoint %s)\n", sv_host.c_str(), port,
                  service->checkpoint_hash().c_str());
      std::fflush(stdout);
      service->listen();
    } else if (*init_enc) {
      check(ldst_write_random_encoder(ie_out.c_str(), ie_divisor, ie_seed));
    } else if (*synth) {
      int kind = -1;
      if (sy_kind == "content") kind = 0;
      if (sy_kind == "style") kind = 1;
      if (kind < 0) user_error("--kind must be content or style");
      check(ldst_write_synthetic(sy_out.c_str(), kind, sy_count, sy_size, sy_size, sy_seed));
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "ldstyle: %s\n", f.message.c_str());
    return f.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ldstyle: internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitOk;
}
