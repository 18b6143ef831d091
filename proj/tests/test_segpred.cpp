#include <doctest.h>

#include <algorithm>
#include <random>

#include "maps_fixture.hpp"
#include "refineloc/errors.hpp"
#include "refineloc/segpred.hpp"
#include "test_util.hpp"

using namespace refineloc;
using testutil::make_maps;

namespace {

using Mask = std::vector<std::uint8_t>;

std::vector<std::pair<int, int>> pairs(const std::vector<Interval>& v) {
  std::vector<std::pair<int, int>> out;
  for (auto s : v) out.emplace_back(s.start, s.end);
  return out;
}

ForwardMaps random_maps(int T, int N, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> bg(T);
  std::vector<std::vector<double>> cbar(T, std::vector<double>(N));
  for (int t = 0; t < T; ++t) {
    bg[t] = u(rng);
    double s = 0.0;
    for (auto& v : cbar[t]) s += (v = u(rng) + 1e-3);
    for (auto& v : cbar[t]) v /= s;
  }
  return make_maps(bg, cbar);
}

}  // namespace

TEST_CASE("foreground mask") {
  auto f = make_maps({1.0, 1.0, 1.0}, {{1.0}, {1.0}, {1.0}});
  CHECK(foreground_mask(f, 0.5) == Mask{0, 0, 0});
  f = make_maps({0.5, 0.50000001, 0.2}, {{1.0}, {1.0}, {1.0}});
  CHECK(foreground_mask(f, 0.5) == Mask{1, 0, 1});

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_maps(20, 3, rng);
    const double a = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto got = foreground_mask(m, a);
    for (int t = 0; t < 20; ++t) CHECK(got[t] == (m.Abf(t, 0) <= a ? 1 : 0));
  }
}

TEST_CASE("class mask") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_maps(15, 4, rng);
    const int n = trial % 4;
    CHECK(class_mask(m, n, 0.0) == Mask(15, 1));
    CHECK(class_mask(m, n, 1.0 + 1e-9) == Mask(15, 0));
    const double a = std::uniform_real_distribution<double>(0, 0.5)(rng);
    const auto got = class_mask(m, n, a);
    for (int t = 0; t < 15; ++t) CHECK(got[t] == (m.Cbar(t, n) >= a ? 1 : 0));
    // Raising the threshold never keeps more snippets.
    const auto tighter = class_mask(m, n, a + 0.1);
    for (int t = 0; t < 15; ++t) CHECK(tighter[t] <= got[t]);
  }
}

TEST_CASE("group segments examples") {
  CHECK(pairs(group_segments({1, 1, 0, 1, 0, 0, 1})) == std::vector<std::pair<int, int>>{{0, 3}, {6, 6}});
  CHECK(group_segments(Mask(9, 0)).empty());
  CHECK(pairs(group_segments(Mask(9, 1))) == std::vector<std::pair<int, int>>{{0, 8}});
  CHECK(group_segments({}).empty());
  CHECK(pairs(group_segments({1, 0, 1}, 0)) == std::vector<std::pair<int, int>>{{0, 0}, {2, 2}});
}

TEST_CASE("group segments equals brute force on every mask up to T = 12") {
  int cases = 0;
  for (int T = 1; T <= 12; ++T) {
    for (unsigned bits = 0; bits < (1u << T); ++bits) {
      Mask mask(T);
      for (int t = 0; t < T; ++t) mask[t] = (bits >> t) & 1u;
      const auto got = group_segments(mask, 1);
      REQUIRE(pairs(got) == testutil::brute_force_groups(mask, 1));
      for (auto s : got) {
        CHECK(mask[s.start] == 1);
        CHECK(mask[s.end] == 1);
      }
      ++cases;
    }
  }
  CHECK(cases == 8190);
}

TEST_CASE("score segment") {
  std::mt19937_64 rng(3);
  const auto one = random_maps(1, 3, rng);
  for (int n = 0; n < 3; ++n) {
    CHECK(score_segment(one, {0, 0}, n) == doctest::Approx(1.0 + 2.0 * one.Cbar(0, n)).epsilon(1e-14));
  }
  const int T = 6, N = 4;
  const auto uni = make_maps(std::vector<double>(T, 0.3), std::vector<std::vector<double>>(T, std::vector<double>(N, 0.25)));
  CHECK(score_segment(uni, {1, 4}, 2) == doctest::Approx(1.0 / T + 0.25 + 0.25).epsilon(1e-14));

  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_maps(30, 5, rng);
    const int a = static_cast<int>(rng() % 30);
    const int b = a + static_cast<int>(rng() % (30 - a));
    const int n = static_cast<int>(rng() % 5);
    double s = 0.0;
    for (int t = a; t <= b; ++t) s += m.Atime[t];
    for (int t = a; t <= b; ++t) s += m.Cbar(t, n);
    const double want = s / (b - a + 1) + m.yhat[n];
    CHECK(std::abs(score_segment(m, {a, b}, n) - want) <= 1e-12);
  }
}

TEST_CASE("inflate") {
  CHECK(inflate({5, 9}, 2, 20) == Interval{3, 11});
  CHECK(inflate({0, 1}, 2, 10) == Interval{0, 3});
  CHECK(inflate({7, 9}, 2, 10) == Interval{5, 9});
  CHECK(inflate({0, 0}, 2, 1) == Interval{0, 0});
}

TEST_CASE("top-k ties go to the lower class id") {
  CHECK(top_k_classes({0.2, 0.4, 0.4}, 2) == std::vector<int>{1, 2});
  CHECK(top_k_classes({0.25, 0.25, 0.25, 0.25}, 2) == std::vector<int>{0, 1});
  CHECK(top_k_classes({0.7, 0.3}, 5) == std::vector<int>{0, 1});
}

TEST_CASE("predict segments on the two-class fixture") {
  const auto f = testutil::two_class_fixture();
  PostprocConfig cfg;
  cfg.alpha_A = 0.5;
  cfg.alpha_C = 0.5;
  cfg.top_k = 2;
  auto preds = predict_segments(f, cfg, "vid");
  REQUIRE(preds.size() == 2);
  std::sort(preds.begin(), preds.end(), [](auto& a, auto& b) { return a.class_id < b.class_id; });
  CHECK(preds[0].start == 0);
  CHECK(preds[0].end == 5);
  CHECK(std::abs(preds[0].score - testutil::two_class_score0()) <= 1e-12);
  CHECK(preds[1].start == 3);
  CHECK(preds[1].end == 7);
  CHECK(std::abs(preds[1].score - testutil::two_class_score1()) <= 1e-12);
  for (const auto& p : preds) CHECK(p.video_id == "vid");

  cfg.top_k = 1;
  const auto top1 = predict_segments(f, cfg);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].class_id == (f.yhat[1] > f.yhat[0] ? 1 : 0));
}

TEST_CASE("predict segments: empty and extents invariant") {
  PostprocConfig cfg;
  const auto none = make_maps(std::vector<double>(10, 0.9), std::vector<std::vector<double>>(10, {0.5, 0.5}));
  CHECK(predict_segments(none, cfg).empty());

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 40);
    const auto m = random_maps(T, 3, rng);
    cfg.alpha_C = 0.2;
    for (const auto& p : predict_segments(m, cfg)) {
      CHECK(p.start >= 0);
      CHECK(p.start <= p.end);
      CHECK(p.end <= T - 1);
    }
  }
}

TEST_CASE("prediction json lines") {
  const SegmentPrediction p{"vid_00001", 3, 9, 2, 1.2345678901234567};
  const auto back = prediction_from_json_line(prediction_to_json_line(p));
  CHECK(back == p);
  CHECK_THROWS_AS(prediction_from_json_line(R"({"video_id":"a","start":1,"end":2,"class_id":0,"score":1,"x":1})"),
                  SchemaError);
  CHECK_THROWS_AS(prediction_from_json_line(R"({"video_id":"a","start":1,"end":2,"class_id":0})"), SchemaError);
  CHECK_THROWS_AS(prediction_from_json_line(R"({"video_id":"a","start":3,"end":2,"class_id":0,"score":1})"),
                  SchemaError);
  CHECK_THROWS_AS(prediction_from_json_line("[1,2"), SchemaError);

  const auto dir = testutil::scratch_dir("preds");
  const std::vector<SegmentPrediction> ps{p, {"vid_00002", 0, 0, 0, -0.5}};
  write_predictions(dir / "p.jsonl", ps);
  CHECK(read_predictions(dir / "p.jsonl") == ps);
}

TEST_CASE("postproc validation") {
  PostprocConfig c;
  c.alpha_A = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.top_k = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
