// HTTP service exercised over a loopback socket.
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "ldstyle/ldstyle.h"
#include "service/service.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Scratch {
  fs::path path;
  Scratch() {
    path = fs::temp_directory_path() / ("ldst_service_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

const Scratch& scratch() {
  static Scratch s;
  return s;
}

// Untrained checkpoint written through the C API (zero iterations needs no data).
const std::string& checkpoint() {
  static const std::string path = [] {
    const std::string ck = (scratch().path / "ck.ld").string();
    ldst_train_config* cfg = nullptr;
    REQUIRE(ldst_train_config_new(&cfg) == LDST_OK);
    REQUIRE(ldst_train_config_set(cfg, "max_iterations", "0") == LDST_OK);
    REQUIRE(ldst_train_config_set(cfg, "encoder_width_divisor", "16") == LDST_OK);
    REQUIRE(ldst_train_config_set(cfg, "checkpoint", ck.c_str()) == LDST_OK);
    int64_t iters = -1;
    REQUIRE(ldst_train(cfg, nullptr, nullptr, &iters) == LDST_OK);
    ldst_train_config_free(cfg);
    return ck;
  }();
  return path;
}

std::string png_of(int h, int w, float phase) {
  std::vector<float> px(3 * static_cast<std::size_t>(h) * w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        px[(static_cast<std::size_t>(c) * h + y) * w + x] =
            0.5f + 0.5f * static_cast<float>(std::sin(phase + 0.31 * x + 0.17 * y + 1.3 * c));
  ldst_image* img = nullptr;
  REQUIRE(ldst_image_create(h, w, px.data(), &img) == LDST_OK);
  ldst_buffer* buf = nullptr;
  REQUIRE(ldst_image_encode(img, LDST_FORMAT_PNG, &buf) == LDST_OK);
  std::string out(reinterpret_cast<const char*>(ldst_buffer_data(buf)), ldst_buffer_size(buf));
  ldst_buffer_free(buf);
  ldst_image_free(img);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

class Running {
 public:
  explicit Running(ldst_service::ServiceOptions opts) : service_(std::move(opts)) {
    port_ = service_.bind("127.0.0.1", 0);
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { service_.listen(); });
    httplib::Client probe("127.0.0.1", port_);
    for (int i = 0; i < 200; ++i) {
      if (probe.Get("/v1/health")) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(120, 0);
    return c;
  }
  ldst_service::Service& service() { return service_; }

 private:
  ldst_service::Service service_;
  int port_ = -1;
  std::thread thread_;
};

ldst_service::ServiceOptions options() {
  ldst_service::ServiceOptions o;
  o.checkpoint = checkpoint();
  return o;
}

httplib::MultipartFormDataItems form(const std::string& content, const std::vector<std::string>& styles) {
  httplib::MultipartFormDataItems items{{"content", content, "content.png", "image/png"}};
  for (const auto& s : styles) items.push_back({"style", s, "style.png", "image/png"});
  return items;
}

}  // namespace

TEST_CASE("health reports the checkpoint hash") {
  Running srv(options());
  auto cli = srv.client();
  const auto res = cli.Get("/v1/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto j = json::parse(res->body);
  CHECK(j["status"] == "ok");
  CHECK(j["checkpoint_hash"].get<std::string>() == srv.service().checkpoint_hash());
  CHECK(j["checkpoint_hash"].get<std::string>().size() == 16);
  CHECK(j["queue_depth"] == 0);
}

TEST_CASE("a missing checkpoint fails at startup") {
  ldst_service::ServiceOptions o;
  o.checkpoint = (scratch().path / "absent.ld").string();
  CHECK_THROWS_AS(ldst_service::Service{o}, ldst_service::ServiceError);
}

TEST_CASE("request validation errors are 400 with a code") {
  Running srv(options());
  auto cli = srv.client();
  const std::string content = png_of(32, 32, 0);
  const std::string style = png_of(32, 32, 1);

  auto res = cli.Post("/v1/stylize", form(content, {}));
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["code"] == "bad_request");

  res = cli.Post("/v1/stylize", form("not an image", {style}));
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["code"] == "bad_image");

  auto items = form(content, {style, style});
  items.push_back({"weights", "1", "", ""});
  res = cli.Post("/v1/stylize", items);
  REQUIRE(res);
  CHECK(res->status == 400);

  items = form(content, {style});
  items.push_back({"alpha", "nan", "", ""});
  res = cli.Post("/v1/stylize", items);
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).contains("message"));

  res = cli.Post("/v1/stylize", "{}", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = cli.Get("/v1/jobs/deadbeef");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body)["code"] == "not_found");
  res = cli.Get("/v1/nothing");
  REQUIRE(res);
  CHECK(res->status == 404);
}

TEST_CASE("responses match the CLI byte for byte") {
  Running srv(options());
  auto cli = srv.client();
  const std::string content = png_of(40, 48, 0);
  const std::string style = png_of(36, 36, 2);
  const auto res = cli.Post("/v1/stylize", form(content, {style}));
  REQUIRE(res);
  REQUIRE(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");

  const auto& d = scratch().path;
  spit(d / "pc.png", content);
  spit(d / "ps.png", style);
  const std::string cmd = std::string(LDST_CLI_PATH) + " stylize -c " + (d / "pc.png").string() + " -s " +
                          (d / "ps.png").string() + " --ckpt " + checkpoint() + " -o " + (d / "cli.png").string();
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  CHECK(res->body == slurp(d / "cli.png"));

  // concurrent identical requests return identical bytes
  std::vector<std::string> bodies(4);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    threads.emplace_back([&, i] {
      auto c = srv.client();
      const auto r = c.Post("/v1/stylize", form(content, {style}));
      if (r && r->status == 200) bodies[i] = r->body;
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& b : bodies) CHECK(b == res->body);
}

TEST_CASE("controls through form fields") {
  Running srv(options());
  auto cli = srv.client();
  const std::string content = png_of(32, 32, 0);
  const std::string s1 = png_of(32, 32, 1);
  const std::string s2 = png_of(32, 32, 2);

  auto items = form(content, {s1, s2});
  items.push_back({"weights", "1, 3", "", ""});
  items.push_back({"alpha", "0.5", "", ""});
  auto res = cli.Post("/v1/stylize", items);
  REQUIRE(res);
  CHECK(res->status == 200);

  items = form(content, {s1, s2});
  items.push_back({"mask", png_of(32, 32, 5), "m0.png", "image/png"});
  items.push_back({"mask", png_of(32, 32, 6), "m1.png", "image/png"});
  items.push_back({"format", "jpeg", "", ""});
  res = cli.Post("/v1/stylize", items);
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/jpeg");

  items = form(content, {s1});
  items.push_back({"mask", png_of(16, 16, 5), "m0.png", "image/png"});
  res = cli.Post("/v1/stylize", items);
  REQUIRE(res);
  CHECK(res->status == 400);
}

TEST_CASE("large inputs go through the job queue") {
  auto o = options();
  o.sync_max_pixels = 100;
  Running srv(o);
  auto cli = srv.client();
  const std::string content = png_of(48, 48, 0);
  const std::string style = png_of(32, 32, 1);
  const auto res = cli.Post("/v1/stylize", form(content, {style}));
  REQUIRE(res);
  REQUIRE(res->status == 202);
  const auto job = json::parse(res->body);
  const std::string id = job["id"];
  CHECK(id.size() == 32);
  CHECK((job["state"] == "queued" || job["state"] == "running"));

  json status;
  for (int i = 0; i < 600; ++i) {
    const auto r = cli.Get("/v1/jobs/" + id);
    REQUIRE(r);
    REQUIRE(r->status == 200);
    status = json::parse(r->body);
    if (status["state"] == "done" || status["state"] == "failed") break;
    const auto early = cli.Get("/v1/jobs/" + id + "/result");
    REQUIRE(early);
    if (early->status == 409) CHECK(json::parse(early->body)["code"] == "not_ready");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(status["state"] == "done");
  const auto result = cli.Get(status["result_url"].get<std::string>());
  REQUIRE(result);
  CHECK(result->status == 200);

  auto sync = options();
  Running direct(sync);
  auto dc = direct.client();
  const auto ref = dc.Post("/v1/stylize", form(content, {style}));
  REQUIRE(ref);
  CHECK(ref->body == result->body);
}

TEST_CASE("a full queue answers 503") {
  auto o = options();
  o.workers = 1;
  o.max_queue = 1;
  o.sync_max_pixels = 0;
  Running srv(o);
  auto cli = srv.client();
  const std::string content = png_of(384, 384, 0);
  const std::string style = png_of(256, 256, 1);
  int accepted = 0, rejected = 0;
  for (int i = 0; i < 6; ++i) {
    const auto r = cli.Post("/v1/stylize", form(content, {style}));
    REQUIRE(r);
    if (r->status == 202) ++accepted;
    if (r->status == 503) {
      ++rejected;
      CHECK(json::parse(r->body)["code"] == "queue_full");
    }
  }
  CHECK(accepted >= 1);
  CHECK(rejected >= 1);
}

TEST_CASE("oversized bodies answer 413") {
  auto o = options();
  o.max_payload = 1024;
  Running srv(o);
  auto cli = srv.client();
  const auto r = cli.Post("/v1/stylize", form(png_of(64, 64, 0), {png_of(64, 64, 1)}));
  REQUIRE(r);
  CHECK(r->status == 413);
  CHECK(json::parse(r->body)["code"] == "payload_too_large");
}

TEST_CASE("CORS headers when an origin is configured") {
  auto o = options();
  o.allow_origin = "http://localhost:5173";
  Running srv(o);
  auto cli = srv.client();
  const auto pre = cli.Options("/v1/stylize");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  const auto h = cli.Get("/v1/health");
  REQUIRE(h);
  CHECK(h->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  Running plain(options());
  auto pc = plain.client();
  const auto h2 = pc.Get("/v1/health");
  REQUIRE(h2);
  CHECK_FALSE(h2->has_header("Access-Control-Allow-Origin"));
}
