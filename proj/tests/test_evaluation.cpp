#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "core/evaluation.hpp"
#include "support.hpp"

using namespace ldst;
using namespace ldst_test;

TEST_CASE("identical pairs score exactly (1,1,1)") {
  std::vector<StylizedPair> pairs;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Image img = random_image(40, 36, 70 + s);
    pairs.push_back({img, img});
  }
  StubDepth<float> depth;
  SobelEdges edges;
  const auto r = structure_consistency(pairs, depth, edges, "identity");
  CHECK(r.content_ssim == 1.0);
  CHECK(r.depth_ssim == 1.0);
  CHECK(r.edge_ssim == 1.0);
  CHECK(r.n_pairs == 4);
  CHECK(r.per_pair.size() == 4);
}

TEST_CASE("structure scores drop for unrelated pairs") {
  StubDepth<float> depth;
  SobelEdges edges;
  const auto r = structure_consistency({{random_image(32, 32, 1), random_image(32, 32, 2)}}, depth, edges);
  CHECK(r.content_ssim < 0.5);
  CHECK_THROWS_AS(structure_consistency({}, depth, edges), Error);
  CHECK_THROWS_AS(structure_consistency({{random_image(32, 32, 1), random_image(16, 32, 2)}}, depth, edges), Error);
}

TEST_CASE("bench statistics exclude warmup runs") {
  const auto net = tiny_net();
  const auto reports = speed_benchmark(net.model, net.encoder, {32, 48}, 10, 3, 1);
  REQUIRE(reports.size() == 2);
  const std::string log = raw_timing_log(reports);
  std::istringstream in(log);
  std::string line;
  std::getline(in, line);
  CHECK(line == "run,resolution,warmup,seconds");
  std::map<int, std::vector<double>> timed;
  std::map<int, int> warm;
  while (std::getline(in, line)) {
    int run, res, w;
    double sec;
    char comma;
    std::istringstream row(line);
    row >> run >> comma >> res >> comma >> w >> comma >> sec;
    if (w) ++warm[res];
    else timed[res].push_back(sec);
  }
  for (const auto& r : reports) {
    CHECK(r.n_runs == 10);
    CHECK(r.warmup_runs == 3);
    CHECK(warm[r.resolution] == 3);
    const auto& t = timed[r.resolution];
    REQUIRE(t.size() == 7);
    const double mean = std::accumulate(t.begin(), t.end(), 0.0) / t.size();
    double var = 0;
    for (double v : t) var += (v - mean) * (v - mean);
    CHECK(r.mean_seconds == doctest::Approx(mean).epsilon(1e-6));
    CHECK(r.std_seconds == doctest::Approx(std::sqrt(var / (t.size() - 1))).epsilon(1e-6));
    CHECK(!r.hardware_note.empty());
  }
}

TEST_CASE("bench argument validation") {
  const auto net = tiny_net();
  CHECK_THROWS_AS(speed_benchmark(net.model, net.encoder, {32}, 9, 0), Error);
  CHECK_THROWS_AS(speed_benchmark(net.model, net.encoder, {32}, 10, 10), Error);
  CHECK_THROWS_AS(speed_benchmark(net.model, net.encoder, {}, 10, 1), Error);
}

TEST_CASE("csv tables parse back to the same values") {
  StructureReport s{"ours", 0.41, 0.886, 0.477, 8, {}};
  SpeedReport p{256, 0.0151, 0.0012, 12, 2, "cpu x", {}};
  const std::vector<Report> reports{s, p};
  const std::string csv = render_table(reports, TableFormat::csv);
  const auto ss = parse_structure_csv(csv);
  const auto ps = parse_speed_csv(csv);
  REQUIRE(ss.size() == 1);
  REQUIRE(ps.size() == 1);
  CHECK(ss[0].method_name == "ours");
  CHECK(ss[0].content_ssim == 0.41);
  CHECK(ss[0].n_pairs == 8);
  CHECK(ps[0].resolution == 256);
  CHECK(ps[0].mean_seconds == 0.0151);
  CHECK(ps[0].warmup_runs == 2);
  CHECK(csv.find("cited") == std::string::npos);
}

TEST_CASE("text tables label cited reference rows") {
  StructureReport s{"ours", 0.5, 0.6, 0.7, 3, {}};
  const std::string text = render_table({Report{s}}, TableFormat::text);
  CHECK(text.find("[cited]") != std::string::npos);
  CHECK(text.find("0.410") != std::string::npos);
  CHECK(text.find("0.364") != std::string::npos);
}
