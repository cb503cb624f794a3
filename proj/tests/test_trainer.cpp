#include <doctest.h>

#include <cmath>
#include <fstream>

#include "core/fsutil.hpp"
#include "core/synthetic.hpp"
#include "core/trainer.hpp"
#include "support.hpp"

using namespace ldst;
using namespace ldst_test;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config(const fs::path& root) {
  write_synth_set(root / "content", SynthKind::content, 4, 40, 48, 1);
  write_synth_set(root / "style", SynthKind::style, 3, 40, 40, 2);
  TrainConfig cfg;
  cfg.content_dir = root / "content";
  cfg.style_dir = root / "style";
  cfg.batch_size = 2;
  cfg.resize_target = 40;
  cfg.crop_size = 32;
  cfg.max_iterations = 3;
  cfg.encoder_width_divisor = 16;
  cfg.seed = 5;
  cfg.checkpoint_path = root / "ck.ld";
  cfg.log_path = root / "log.csv";
  return cfg;
}

bool same_parameters(const TransferModel<float>& a, const TransferModel<float>& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].second->weight != pb[i].second->weight || pa[i].second->bias != pb[i].second->bias) return false;
  }
  return true;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::internal;
}

}  // namespace

TEST_CASE("config text round trip and validation") {
  TrainConfig cfg;
  cfg.set("learning_rate", "0.001");
  cfg.set("lambda_lap", "0.5");
  cfg.set("crop_size", "128");
  cfg.set("depth_backend", "stub");
  const TrainConfig back = TrainConfig::parse(cfg.to_text());
  CHECK(back.learning_rate == 0.001);
  CHECK(back.weights.lap == 0.5);
  CHECK(back.crop_size == 128);
  CHECK(back.to_text() == cfg.to_text());
  CHECK(code_of([&] { cfg.set("no_such_key", "1"); }) == ErrorCode::argument);
  CHECK(code_of([&] { cfg.set("batch_size", "five"); }) == ErrorCode::argument);
  TrainConfig bad;
  bad.crop_size = 100;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::argument);
  TrainConfig neg;
  neg.weights.style = -1;
  CHECK(code_of([&] { neg.validate(); }) == ErrorCode::argument);
}

TEST_CASE("config files resolve relative paths against their directory") {
  TempDir dir("cfg");
  fs::create_directories(dir.path / "sub");
  write_text_atomic(dir.path / "sub" / "run.cfg", "content_dir = data/c\nstyle_dir = /abs/s\nmax_iterations = 7\n");
  const TrainConfig cfg = TrainConfig::load(dir.path / "sub" / "run.cfg");
  CHECK(cfg.content_dir == dir.path / "sub" / "data/c");
  CHECK(cfg.style_dir == fs::path("/abs/s"));
  CHECK(cfg.max_iterations == 7);
  CHECK(code_of([&] { TrainConfig::load(dir.path / "missing.cfg"); }) == ErrorCode::io);
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  TrainConfig cfg = small_config(dir.path);
  const Checkpoint ck = train(cfg);
  const auto bytes1 = read_file(cfg.checkpoint_path);
  const Checkpoint back = load_checkpoint(cfg.checkpoint_path);
  CHECK(same_parameters(ck.model, back.model));
  CHECK(back.iteration == 3);
  CHECK(back.adam.step == ck.adam.step);
  CHECK(same_parameters(ck.adam.m, back.adam.m));
  CHECK(same_parameters(ck.adam.v, back.adam.v));
  save_checkpoint(back, dir.path / "again.ld");
  CHECK(read_file(dir.path / "again.ld") == bytes1);
}

TEST_CASE("bad checkpoints are rejected loudly") {
  TempDir dir("badck");
  TrainConfig cfg = small_config(dir.path);
  cfg.max_iterations = 0;
  const Checkpoint ck = train(cfg);
  auto bytes = read_file(cfg.checkpoint_path);

  SUBCASE("schema version mismatch") {
    Archive a = checkpoint_archive(ck);
    a.schema_version = kArchiveSchemaVersion + 1;
    a.save(dir.path / "future.ld");
    CHECK(code_of([&] { load_checkpoint(dir.path / "future.ld"); }) == ErrorCode::checkpoint_format);
  }
  SUBCASE("model version mismatch") {
    Checkpoint other = ck;
    other.model.version = kModelVersion + 1;
    save_checkpoint(other, dir.path / "model2.ld");
    CHECK(code_of([&] { load_checkpoint(dir.path / "model2.ld"); }) == ErrorCode::checkpoint_format);
  }
  SUBCASE("wrong magic") {
    bytes[0] = 'X';
    write_file_atomic(dir.path / "magic.ld", bytes);
    CHECK(code_of([&] { load_checkpoint(dir.path / "magic.ld"); }) == ErrorCode::corrupt);
  }
  SUBCASE("truncated") {
    bytes.resize(bytes.size() / 2);
    write_file_atomic(dir.path / "short.ld", bytes);
    CHECK(code_of([&] { load_checkpoint(dir.path / "short.ld"); }) == ErrorCode::corrupt);
  }
  SUBCASE("missing") {
    CHECK(code_of([&] { load_checkpoint(dir.path / "nope.ld"); }) == ErrorCode::io);
  }
}

TEST_CASE("zero iterations needs no data") {
  TempDir dir("zero");
  TrainConfig cfg;
  cfg.content_dir = dir.path / "absent_c";
  cfg.style_dir = dir.path / "absent_s";
  cfg.encoder_width_divisor = 16;
  cfg.checkpoint_path = dir.path / "ck.ld";
  const Checkpoint ck = train(cfg);
  CHECK(ck.iteration == 0);
  CHECK(fs::exists(cfg.checkpoint_path));
  cfg.max_iterations = 1;
  CHECK(code_of([&] { train(cfg); }) == ErrorCode::dataset);
}

TEST_CASE("all-zero loss weights leave parameters unchanged") {
  TempDir dir("lambda0");
  TrainConfig cfg = small_config(dir.path);
  cfg.weights = {0, 0, 0, 0};
  const Checkpoint init = initial_checkpoint(cfg);
  const Checkpoint out = train(cfg);
  CHECK(same_parameters(init.model, out.model));
}

TEST_CASE("the encoder stays frozen") {
  TempDir dir("frozen");
  TrainConfig cfg = small_config(dir.path);
  const Checkpoint init = initial_checkpoint(cfg);
  const Checkpoint out = train(cfg);
  CHECK_FALSE(same_parameters(init.model, out.model));
  for (int i = 0; i < Encoder<float>::kConvCount; ++i) {
    CHECK(init.encoder.conv(i).weight == out.encoder.conv(i).weight);
    CHECK(init.encoder.conv(i).bias == out.encoder.conv(i).bias);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  TempDir a("det_a");
  TempDir b("det_b");
  TrainConfig ca = small_config(a.path);
  TrainConfig cb = small_config(b.path);
  const Checkpoint ka = train(ca);
  const Checkpoint kb = train(cb);
  CHECK(same_parameters(ka.model, kb.model));
  std::string la, lb;
  {
    const auto x = read_file(ca.log_path);
    const auto y = read_file(cb.log_path);
    la.assign(x.begin(), x.end());
    lb.assign(y.begin(), y.end());
  }
  CHECK(la == lb);
  CHECK(la.rfind("iteration,content,style,lap,depth,total\n", 0) == 0);
}

TEST_CASE("resume continues from the saved iteration") {
  TempDir dir("resume");
  TrainConfig cfg = small_config(dir.path);
  cfg.max_iterations = 2;
  train(cfg);
  cfg.max_iterations = 4;
  const Checkpoint ck = train(cfg, {}, load_checkpoint(cfg.checkpoint_path));
  CHECK(ck.iteration == 4);
  CHECK(ck.adam.step == 4);
}

TEST_CASE("divergence stops before the update and keeps the last good checkpoint") {
  TempDir dir("diverge");
  TrainConfig cfg = small_config(dir.path);
  cfg.learning_rate = 1e30;
  cfg.max_iterations = 20;
  cfg.checkpoint_every = 1;
  std::int64_t last = 0;
  TrainHooks hooks;
  hooks.on_step = [&](std::int64_t it, const LossBreakdown&) { last = it; };
  try {
    train(cfg, hooks);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() == last + 1);
  }
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path);
  CHECK(ck.iteration == last);
}

TEST_CASE("undecodable files are skipped with a warning") {
  TempDir dir("skip");
  TrainConfig cfg = small_config(dir.path);
  {
    std::ofstream junk(cfg.content_dir / "zz_broken.png");
    junk << "not a png";
  }
  std::vector<std::string> warnings;
  PairStream stream(cfg, [&](const std::string& w) { warnings.push_back(w); });
  CHECK(stream.content_count() == 5);
  for (int i = 0; i < 4; ++i) {
    const Batch b = stream.next();
    CHECK(b.content.size() == 2);
    CHECK(b.content[0].height == 32);
  }
  CHECK(warnings.size() == 1);
  CHECK(stream.content_count() == 4);
}

TEST_CASE("empty or missing image folders are dataset errors") {
  TempDir dir("empty");
  TrainConfig cfg = small_config(dir.path);
  fs::create_directories(dir.path / "nothing");
  cfg.style_dir = dir.path / "nothing";
  CHECK(code_of([&] { PairStream s(cfg); }) == ErrorCode::dataset);
}

TEST_CASE("a tiny model overfits a single pair") {
  TempDir dir("overfit");
  write_synth_set(dir.path / "c", SynthKind::content, 1, 32, 32, 3);
  write_synth_set(dir.path / "s", SynthKind::style, 1, 32, 32, 4);
  TrainConfig cfg;
  cfg.content_dir = dir.path / "c";
  cfg.style_dir = dir.path / "s";
  cfg.batch_size = 1;
  cfg.resize_target = 32;
  cfg.crop_size = 32;
  cfg.max_iterations = 60;
  cfg.learning_rate = 2e-3;
  cfg.encoder_width_divisor = 16;
  cfg.checkpoint_path = dir.path / "ck.ld";
  std::vector<double> totals;
  TrainHooks hooks;
  hooks.on_step = [&](std::int64_t, const LossBreakdown& b) { totals.push_back(b.total); };
  train(cfg, hooks);
  REQUIRE(totals.size() == 60);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += totals[i];
    last += totals[50 + i];
  }
  CHECK(last < 0.5 * first);
}

TEST_CASE("sweep trains one model per cell") {
  TempDir dir("sweep");
  TrainConfig cfg = small_config(dir.path);
  cfg.max_iterations = 1;
  std::vector<HeldOutPair> held{{random_image(32, 32, 1), random_image(32, 32, 2)}};
  const auto cells = ablation_sweep(cfg, {0.0, 0.1}, {0.0}, held, dir.path / "out");
  REQUIRE(cells.size() == 2);
  for (const auto& c : cells) {
    CHECK(c.error.empty());
    CHECK(fs::exists(c.checkpoint));
    REQUIRE(c.report.has_value());
    CHECK(c.report->n_pairs == 1);
  }
  CHECK(fs::exists(dir.path / "out" / cell_name(0.1, 0.0) / "report.csv"));
}
