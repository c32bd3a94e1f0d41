#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "pidcount/errors.hpp"
#include "pidcount/metrics.hpp"
#include "support/oracles.hpp"

using namespace pidcount;

TEST_CASE("Hausdorff equals the brute-force oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.between(1, 32), w = rng.between(1, 32);
    const auto a = oracle::random_mask(h, w, rng.uniform(0.0, 0.3), rng);
    const auto b = oracle::random_mask(h, w, rng.uniform(0.0, 0.3), rng);
    const long long want = oracle::brute_hausdorff_sq(a, b);
    const auto got = hausdorff(a, b);
    if (want < 0) {
      CHECK(got.one_empty == (a.area() + b.area() > 0));
      continue;
    }
    REQUIRE(got.distance == std::sqrt(static_cast<double>(want)));
    CHECK_FALSE(got.one_empty);
  }
}

TEST_CASE("Hausdorff edge cases") {
  Mask a(4, 3), b(4, 3);
  CHECK(hausdorff(a, b).distance == 0.0);
  a.at(0, 0) = 1;
  const auto r = hausdorff(a, b);
  CHECK(r.one_empty);
  CHECK(r.distance == doctest::Approx(5.0));
  b.at(3, 2) = 1;
  CHECK(hausdorff(a, b).distance == doctest::Approx(std::sqrt(13.0)));
  CHECK_THROWS_AS(hausdorff(a, Mask(3, 3)), DimensionError);
}

TEST_CASE("squared distance transform matches brute force") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_mask(rng.between(1, 20), rng.between(1, 20), 0.1, rng);
    const auto d = squared_distance_transform(m);
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (int v = 0; v < m.height; ++v)
          for (int u = 0; u < m.width; ++u)
            if (m.at(v, u)) best = std::min(best, double((y - v) * (y - v) + (x - u) * (x - u)));
        REQUIRE(d[y * m.width + x] == best);
      }
    }
  }
}

TEST_CASE("segmentation metric identities") {
  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = oracle::random_mask(12, 12, rng.uniform(0.05, 0.9), rng);
    const auto b = oracle::random_mask(12, 12, rng.uniform(0.05, 0.9), rng);
    const auto s = segmentation_metrics(confusion(a, b));
    REQUIRE(std::abs(s.jaccard - s.dice / (2.0 - s.dice)) < 1e-9);
  }
}

TEST_CASE("segmentation metrics on a worked example") {
  // tp 2, fp 1, fn 1, tn 5
  Mask pred(3, 3), gt(3, 3);
  pred.at(0, 0) = pred.at(0, 1) = pred.at(0, 2) = 1;
  gt.at(0, 0) = gt.at(0, 1) = gt.at(1, 0) = 1;
  const auto c = confusion(pred, gt);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 5);
  const auto s = segmentation_metrics(c);
  CHECK(s.accuracy == doctest::Approx(7.0 / 9.0));
  CHECK(s.dice == doctest::Approx(4.0 / 6.0));
  CHECK(s.jaccard == doctest::Approx(0.5));
  CHECK(s.precision == doctest::Approx(2.0 / 3.0));

  const auto empty = segmentation_metrics(confusion(Mask(2, 2), Mask(2, 2)));
  CHECK(empty.dice == 1.0);
  CHECK(empty.jaccard == 1.0);
  CHECK(empty.precision == 1.0);
}

TEST_CASE("counting accuracy") {
  CHECK(counting_accuracy(97, 100) == 0.97);
  CHECK(counting_accuracy(100, 100) == 1.0);
  CHECK(counting_accuracy(300, 100) == -1.0);
  CHECK(counting_accuracy(0, 4) == 0.0);
  CHECK_THROWS_AS(counting_accuracy(3, 0), UndefinedMetricError);
}

TEST_CASE("aggregation and reports") {
  Mask gt(4, 4), pred(4, 4);
  gt.at(1, 1) = pred.at(1, 1) = 1;
  std::vector<ImageMetrics> rows;
  rows.push_back(evaluate_image("a", "otsu", pred, gt, 1, 1));
  rows.push_back(evaluate_image("b", "otsu", pred, gt, 3, 2));
  rows.push_back(evaluate_image("c", "otsu", Mask(4, 4), Mask(4, 4), 0, 0));
  CHECK_FALSE(rows[2].counting_accuracy.has_value());
  const auto r = aggregate("otsu", rows);
  CHECK(r.counting_accuracy == doctest::Approx(0.75));
  CHECK(r.counting_excluded == 1);
  CHECK(r.mean.dice == 1.0);

  const auto dir = std::filesystem::temp_directory_path() / "pidcount_test_metrics";
  std::filesystem::create_directories(dir);
  write_metrics_csv(dir / "m.csv", r.rows);
  write_metrics_json(dir / "m.json", r);
  std::ifstream js(dir / "m.json");
  const auto j = nlohmann::json::parse(js);
  for (const char* key : {"accuracy", "dice", "jaccard", "precision", "counting_accuracy", "hausdorff_px"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["images"] == 3);
  std::ifstream csv(dir / "m.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("id,method,accuracy,dice,jaccard,precision", 0) == 0);
  std::filesystem::remove_all(dir);
}
