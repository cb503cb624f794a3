// Exercises the shared library through its public header only.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "ldstyle/ldstyle.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path path;
  explicit Scratch(const char* tag) {
    path = fs::temp_directory_path() / (std::string("ldst_capi_") + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

ldst_image* gradient_image(int h, int w, float phase) {
  std::vector<float> px(3 * static_cast<std::size_t>(h) * w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        px[(static_cast<std::size_t>(c) * h + y) * w + x] =
            0.5f + 0.5f * static_cast<float>(std::sin(phase + 0.3 * x + 0.2 * y + c));
  ldst_image* img = nullptr;
  REQUIRE(ldst_image_create(h, w, px.data(), &img) == LDST_OK);
  return img;
}

std::vector<unsigned char> bytes_of(ldst_buffer* b) {
  std::vector<unsigned char> v(ldst_buffer_data(b), ldst_buffer_data(b) + ldst_buffer_size(b));
  ldst_buffer_free(b);
  return v;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(ldst_status_name(LDST_OK)) == "ok");
  CHECK(std::string(ldst_status_name(LDST_ERR_CHECKPOINT_FORMAT)) == "checkpoint-format");
  CHECK(std::strlen(ldst_version()) > 0);
}

TEST_CASE("argument errors set the thread's last error") {
  ldst_engine* e = nullptr;
  CHECK(ldst_engine_load(nullptr, &e) == LDST_ERR_ARGUMENT);
  CHECK(std::strlen(ldst_last_error()) > 0);
  CHECK(ldst_engine_load("/nonexistent/ck.ld", &e) == LDST_ERR_IO);
  CHECK(e == nullptr);
  CHECK(ldst_image_create(0, 4, nullptr, nullptr) == LDST_ERR_ARGUMENT);
  const unsigned char junk[] = {0, 1, 2};
  ldst_image* img = nullptr;
  CHECK(ldst_image_decode(junk, sizeof junk, &img) == LDST_ERR_DECODE);
}

TEST_CASE("stylize variants through the C API") {
  ldst_engine* e = nullptr;
  REQUIRE(ldst_engine_random(16, 3, &e) == LDST_OK);
  CHECK(std::strlen(ldst_engine_hash(e)) == 16);
  ldst_image* c = gradient_image(40, 48, 0.0f);
  ldst_image* s1 = gradient_image(32, 32, 1.0f);
  ldst_image* s2 = gradient_image(32, 32, 2.0f);

  ldst_image* plain = nullptr;
  REQUIRE(ldst_stylize(e, c, s1, &plain) == LDST_OK);
  CHECK(ldst_image_height(plain) == 40);
  CHECK(ldst_image_width(plain) == 48);

  ldst_image* a1 = nullptr;
  REQUIRE(ldst_stylize_alpha(e, c, s1, 1.0, &a1) == LDST_OK);
  CHECK(std::memcmp(ldst_image_pixels(a1), ldst_image_pixels(plain), sizeof(float) * 3 * 40 * 48) == 0);

  ldst_image* clamped = nullptr;
  REQUIRE(ldst_stylize_alpha(e, c, s1, 2.0, &clamped) == LDST_OK);
  CHECK(std::string(ldst_last_warning()).find("clamped") != std::string::npos);

  const ldst_image* styles[] = {s1, s2};
  const double weights[] = {1.0, 0.0};
  ldst_image* multi = nullptr;
  REQUIRE(ldst_stylize_multi(e, c, styles, weights, 2, &multi) == LDST_OK);
  ldst_image* none = nullptr;
  CHECK(ldst_stylize_multi(e, c, styles, weights, 0, &none) == LDST_ERR_ARGUMENT);

  std::vector<float> full(3 * 40 * 48, 1.0f);
  ldst_image* mask = nullptr;
  REQUIRE(ldst_image_create(40, 48, full.data(), &mask) == LDST_OK);
  const ldst_image* masks[] = {mask};
  const ldst_image* mstyles[] = {s1};
  ldst_image* spatial = nullptr;
  REQUIRE(ldst_stylize_spatial(e, c, masks, mstyles, 1, &spatial) == LDST_OK);

  ldst_request req{};
  req.content = c;
  req.styles = styles;
  req.n_styles = 2;
  req.alpha = 0.0;
  ldst_image* recon = nullptr;
  REQUIRE(ldst_stylize_request(e, &req, &recon) == LDST_OK);
  ldst_image* recon_ref = nullptr;
  REQUIRE(ldst_stylize(e, c, c, &recon_ref) == LDST_OK);
  CHECK(std::memcmp(ldst_image_pixels(recon), ldst_image_pixels(recon_ref), sizeof(float) * 3 * 40 * 48) == 0);

  ldst_buffer* png = nullptr;
  REQUIRE(ldst_image_encode(plain, LDST_FORMAT_PNG, &png) == LDST_OK);
  const auto bytes = bytes_of(png);
  ldst_image* back = nullptr;
  REQUIRE(ldst_image_decode(bytes.data(), bytes.size(), &back) == LDST_OK);
  CHECK(ldst_image_width(back) == 48);

  for (ldst_image* img : {c, s1, s2, plain, a1, clamped, multi, mask, spatial, recon, recon_ref, back})
    ldst_image_free(img);
  ldst_engine_free(e);
}

TEST_CASE("train, reload and evaluate through the C API") {
  Scratch dir("train");
  REQUIRE(ldst_write_synthetic((dir.path / "c").c_str(), 0, 3, 40, 40, 1) == LDST_OK);
  REQUIRE(ldst_write_synthetic((dir.path / "s").c_str(), 1, 3, 40, 40, 2) == LDST_OK);
  ldst_train_config* cfg = nullptr;
  REQUIRE(ldst_train_config_new(&cfg) == LDST_OK);
  const std::string ck = (dir.path / "ck.ld").string();
  const std::pair<const char*, std::string> settings[] = {
      {"content_dir", (dir.path / "c").string()}, {"style_dir", (dir.path / "s").string()},
      {"batch_size", "2"}, {"resize_target", "40"}, {"crop_size", "32"}, {"max_iterations", "2"},
      {"encoder_width_divisor", "16"}, {"checkpoint", ck}};
  for (const auto& [k, v] : settings) REQUIRE(ldst_train_config_set(cfg, k, v.c_str()) == LDST_OK);
  CHECK(ldst_train_config_set(cfg, "bogus", "1") == LDST_ERR_ARGUMENT);

  struct Seen {
    int steps = 0;
  } seen;
  ldst_train_hooks hooks{};
  hooks.on_step = [](int64_t, const ldst_losses* l, void* u) {
    CHECK(l->total >= 0);
    static_cast<Seen*>(u)->steps++;
  };
  hooks.user = &seen;
  int64_t iters = -1;
  REQUIRE(ldst_train(cfg, nullptr, &hooks, &iters) == LDST_OK);
  CHECK(iters == 2);
  CHECK(seen.steps == 2);

  ldst_engine* e = nullptr;
  REQUIRE(ldst_engine_load(ck.c_str(), &e) == LDST_OK);
  ldst_engine* e2 = nullptr;
  REQUIRE(ldst_engine_load(ck.c_str(), &e2) == LDST_OK);
  CHECK(std::string(ldst_engine_hash(e)) == ldst_engine_hash(e2));

  fs::create_directories(dir.path / "pairs");
  fs::copy(dir.path / "c", dir.path / "pairs" / "content");
  fs::copy(dir.path / "s", dir.path / "pairs" / "style");
  ldst_report* rep = nullptr;
  REQUIRE(ldst_evaluate_dir((dir.path / "pairs").c_str(), e, "stub", "sobel", "ours", &rep) == LDST_OK);
  ldst_structure_scores scores{};
  REQUIRE(ldst_report_structure(rep, &scores) == LDST_OK);
  CHECK(scores.n_pairs == 3);
  CHECK(scores.content_ssim <= 1.0);
  ldst_buffer* csv = nullptr;
  REQUIRE(ldst_report_render(rep, 1, &csv) == LDST_OK);
  const auto text = bytes_of(csv);
  CHECK(std::string(text.begin(), text.end()).rfind("method,", 0) == 0);
  ldst_report_free(rep);

  ldst_report* missing = nullptr;
  CHECK(ldst_evaluate_dir((dir.path / "pairs").c_str(), nullptr, "stub", "sobel", "x", &missing) != LDST_OK);
  CHECK(ldst_evaluate_dir((dir.path / "pairs").c_str(), e, "monodepth", "sobel", "x", &missing) ==
        LDST_ERR_BACKEND_UNAVAILABLE);

  const int res[] = {32};
  ldst_report* bench = nullptr;
  REQUIRE(ldst_bench(e, res, 1, 10, 2, 1, &bench) == LDST_OK);
  ldst_buffer* raw = nullptr;
  REQUIRE(ldst_report_raw_log(bench, &raw) == LDST_OK);
  const auto log = bytes_of(raw);
  CHECK(std::count(log.begin(), log.end(), '\n') == 11);
  CHECK(ldst_bench(e, res, 1, 5, 0, 1, &missing) == LDST_ERR_ARGUMENT);
  ldst_report_free(bench);

  // corrupt checkpoint
  {
    FILE* f = std::fopen((dir.path / "bad.ld").c_str(), "wb");
    std::fputs("garbage", f);
    std::fclose(f);
  }
  ldst_engine* bad = nullptr;
  CHECK(ldst_engine_load((dir.path / "bad.ld").c_str(), &bad) == LDST_ERR_CORRUPT);

  ldst_engine_free(e);
  ldst_engine_free(e2);
  ldst_train_config_free(cfg);
}
