#include <doctest.h>

#include <filesystem>

#include "pidcount/errors.hpp"
#include "pidcount/postproc.hpp"
#include "support/oracles.hpp"

using namespace pidcount;

namespace {

Mask from_rows(const std::vector<std::string>& rows) {
  Mask m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) m.at(y, x) = rows[y][x] == '#';
  }
  return m;
}

Tensor probs_from(const std::vector<float>& fg, int h, int w) {
  std::vector<float> v(2 * fg.size());
  for (std::size_t i = 0; i < fg.size(); ++i) {
    v[i] = 1.0f - fg[i];
    v[fg.size() + i] = fg[i];
  }
  return Tensor::from_data({1, 2, h, w}, v);
}

}  // namespace

TEST_CASE("label_components_8 agrees with the flood-fill oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = oracle::random_mask(16, 16, rng.uniform(0.1, 0.7), rng);
    int count = 0;
    const auto want = oracle::flood_fill_labels(m, &count);
    const auto got = label_components_8(m);
    REQUIRE(got.count == count);
    REQUIRE(got.labels == want);
  }
}

TEST_CASE("label_components_8 worked examples") {
  SUBCASE("diagonal touch joins") {
    CHECK(label_components_8(from_rows({"#..", ".#.", "..#"})).count == 1);
  }
  SUBCASE("two separated blocks") {
    CHECK(label_components_8(from_rows({"##..##", "##..##"})).count == 2);
  }
  SUBCASE("U shape merges late") {
    const auto l = label_components_8(from_rows({"#.#", "#.#", "###"}));
    CHECK(l.count == 1);
    CHECK(l.at(0, 2) == 1);
  }
  SUBCASE("empty and full") {
    CHECK(label_components_8(Mask(5, 7)).count == 0);
    Mask full(5, 7);
    std::fill(full.data.begin(), full.data.end(), 1);
    CHECK(label_components_8(full).count == 1);
  }
  SUBCASE("areas") {
    const auto l = label_components_8(from_rows({"##..#", "....#", "#...."}));
    CHECK(component_areas(l) == std::vector<std::size_t>{10, 2, 2, 1});
  }
}

TEST_CASE("binarize uses a strict threshold") {
  const auto masks = binarize(probs_from({0.5f, 0.5001f, 0.2f, 0.9f}, 2, 2), 0.5f);
  REQUIRE(masks.size() == 1);
  CHECK(masks[0].data == std::vector<std::uint8_t>{0, 1, 0, 1});
  CHECK_THROWS_AS(binarize(Tensor::zeros({1, 3, 2, 2})), DimensionError);
}

TEST_CASE("morphology") {
  SUBCASE("opening removes a single pixel and keeps a 3x3 block") {
    const auto m = from_rows({"#......", ".......", "...###.", "...###.", "...###."});
    const auto o = dilate3x3(erode3x3(m));
    CHECK(o.at(0, 0) == 0);
    CHECK(o.area() == 9);
  }
  SUBCASE("erosion treats the outside as background") {
    Mask full(3, 3);
    std::fill(full.data.begin(), full.data.end(), 1);
    CHECK(erode3x3(full).area() == 1);
  }
  SUBCASE("area filter") {
    PostprocParams p;
    p.opening = false;
    p.min_area = 3;
    const auto f = morph_filter(from_rows({"##...", ".....", "..###"}), p);
    CHECK(f == from_rows({".....", ".....", "..###"}));
  }
}

TEST_CASE("PostprocParams") {
  PostprocParams p;
  CHECK(p.scaled_for(256).min_area == 9);
  CHECK(p.scaled_for(32).min_area == 0);
  CHECK(p.scaled_for(128).min_area == 2);
  p.prob_threshold = 1.5f;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("count_objects") {
  // two 3x3 blobs and one isolated pixel removed by the opening
  std::vector<float> fg(10 * 10, 0.1f);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x) fg[y * 10 + x] = 0.9f;
  for (int y = 6; y < 9; ++y)
    for (int x = 5; x < 8; ++x) fg[y * 10 + x] = 0.8f;
  fg[9 * 10 + 0] = 0.99f;
  const auto r = count_objects(probs_from(fg, 10, 10), PostprocParams{});
  CHECK(r.count == 2);
  CHECK(r.filtered.area() == 18);

  const auto dir = std::filesystem::temp_directory_path() / "pidcount_test_labels";
  std::filesystem::create_directories(dir);
  write_label_png(dir / "l.png", r.labels);
  CHECK(std::filesystem::file_size(dir / "l.png") > 0);
  std::filesystem::remove_all(dir);
}
