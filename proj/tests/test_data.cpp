#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pidcount/data.hpp"
#include "pidcount/errors.hpp"
#include "pidcount/postproc.hpp"
#include "support/oracles.hpp"

using namespace pidcount;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

/// Square sample whose pixel values encode their coordinates.
Sample coordinate_sample(int n) {
  Sample s;
  s.id = "c";
  s.image = Image(n, n, 1);
  s.mask = Mask(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      s.image.at(y, x) = static_cast<float>(y * n + x) / (n * n);
      s.mask.at(y, x) = (3 * y + x) % 5 == 0;
    }
  }
  return s;
}

SynthParams small_synth(int n, std::uint64_t seed) {
  SynthParams p;
  p.n_images = n;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("PNG round trips") {
  TempDir dir("pidcount_test_png");
  SUBCASE("16-bit gray") {
    std::vector<std::uint16_t> px{0, 1, 30000, 65535, 12345, 777};
    write_png_gray16(dir.path / "g16.png", 2, 3, px.data());
    const auto img = read_png(dir.path / "g16.png");
    REQUIRE(img.channels == 1);
    for (std::size_t i = 0; i < px.size(); ++i) CHECK(img.data[i] == doctest::Approx(px[i] / 65535.0).epsilon(1e-6));
  }
  SUBCASE("8-bit RGB") {
    Image rgb(2, 2, 3);
    for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = static_cast<float>(i * 20) / 255.0f;
    write_png(dir.path / "rgb.png", rgb);
    const auto back = read_png(dir.path / "rgb.png");
    REQUIRE(back.channels == 3);
    for (std::size_t i = 0; i < rgb.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(rgb.data[i]).epsilon(1e-6));
  }
  SUBCASE("mask threshold at 128") {
    std::vector<std::uint8_t> px{0, 127, 128, 255};
    write_png_gray8(dir.path / "m.png", 2, 2, px.data());
    CHECK(read_mask_png(dir.path / "m.png").data == std::vector<std::uint8_t>{0, 0, 1, 1});
  }
  SUBCASE("missing and corrupt files") {
    CHECK_THROWS_AS(read_png(dir.path / "none.png"), LoadError);
    std::ofstream(dir.path / "bad.png") << "not a png";
    CHECK_THROWS_AS(read_png(dir.path / "bad.png"), LoadError);
  }
}

TEST_CASE("dataset directories") {
  TempDir dir("pidcount_test_dataset");
  auto samples = synth_blobs(small_synth(6, 3));
  save_dataset(dir.path, samples);

  std::vector<std::string> warnings;
  std::ofstream(dir.path / "images" / "notes.txt") << "x";
  const auto back = load_dataset(dir.path, &warnings);
  CHECK(warnings.size() == 1);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == samples[i].id);
    CHECK(back[i].mask == samples[i].mask);
    CHECK(back[i].true_count == samples[i].true_count);
    for (std::size_t k = 0; k < back[i].image.data.size(); ++k) {
      REQUIRE(std::abs(back[i].image.data[k] - samples[i].image.data[k]) <= 0.5f / 255.0f + 1e-6f);
    }
  }

  fs::remove(dir.path / "masks" / (samples[2].id + ".png"));
  try {
    load_dataset(dir.path);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find(samples[2].id) != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(dir.path / "missing"), LoadError);
}

TEST_CASE("geometry against coordinate maps") {
  const int n = 6;
  const auto s = coordinate_sample(n);
  SUBCASE("mirror") {
    const auto m = mirror(s);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        CHECK(m.image.at(y, x) == s.image.at(y, n - 1 - x));
        CHECK(m.mask.at(y, x) == s.mask.at(y, n - 1 - x));
      }
  }
  SUBCASE("quarter turn counter-clockwise") {
    // pixel (r, c) moves to (n-1-c, r)
    const auto r = rotate90(s, 1);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        CHECK(r.image.at(n - 1 - x, y) == s.image.at(y, x));
        CHECK(r.mask.at(n - 1 - x, y) == s.mask.at(y, x));
      }
    const auto full = rotate90(rotate90(r, 2), 1);
    CHECK(full.image.data == s.image.data);
    CHECK(rotate90(s, -1).image.data == rotate90(s, 3).image.data);
  }
  SUBCASE("augment8") {
    const auto all = augment8(s);
    REQUIRE(all.size() == 8);
    std::set<std::vector<float>> distinct;
    for (const auto& a : all) distinct.insert(a.image.data);
    CHECK(distinct.size() == 8);
    CHECK(all[0].image.data == s.image.data);
    for (const auto& a : all) {
      if (a.id == "c_r90m") CHECK(a.image.data == rotate90(mirror(s), 1).image.data);
      if (a.id == "c_r270") CHECK(a.image.data == rotate90(s, 3).image.data);
    }
    Sample wide = s;
    wide.image = Image(4, 8, 1);
    wide.mask = Mask(4, 8);
    CHECK_THROWS_AS(augment8(wide), ConfigError);
  }
}

TEST_CASE("resize") {
  auto s = coordinate_sample(32);
  CHECK(resize(s, 32).image.data == s.image.data);
  const auto half = resize(s, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const float mean = (s.image.at(2 * y, 2 * x) + s.image.at(2 * y + 1, 2 * x) + s.image.at(2 * y, 2 * x + 1) +
                          s.image.at(2 * y + 1, 2 * x + 1)) /
                         4.0f;
      CHECK(half.image.at(y, x) == doctest::Approx(mean).epsilon(1e-5));
      CHECK(half.mask.at(y, x) == s.mask.at(2 * y + 1, 2 * x + 1));
    }
  CHECK(resize(s, 64).image.height == 64);
  CHECK_THROWS_AS(resize(s, 20), ConfigError);
  CHECK_THROWS_AS(resize(s, 0), ConfigError);
}

TEST_CASE("split") {
  CHECK(split_sizes(306) == std::array<std::size_t, 3>{184, 61, 61});
  CHECK(split_sizes(5) == std::array<std::size_t, 3>{3, 1, 1});
  CHECK(split_sizes(192, {4, 1, 1}) == std::array<std::size_t, 3>{128, 32, 32});

  const auto samples = synth_blobs(small_synth(10, 5));
  const auto a = split(samples, 42), b = split(samples, 42), c = split(samples, 43);
  CHECK(a.train.size() == 6 * 8);
  CHECK(a.val.size() == 2 * 8);
  CHECK(a.test.size() == 2);
  std::set<std::string> seen;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto& s : *part) seen.insert(s.id.substr(0, 9));
  CHECK(seen.size() == 10);
  auto ids = [](const DatasetSplit& d) {
    std::vector<std::string> v;
    for (const auto& s : d.test) v.push_back(s.id);
    for (const auto& s : d.val) v.push_back(s.id);
    return v;
  };
  CHECK(ids(a) == ids(b));
  CHECK(ids(a) != ids(c));

  CHECK(split(samples, 1, AugmentPolicy::Paper).test.size() == 16);
  const auto none = split(samples, 1, AugmentPolicy::None);
  CHECK(none.train.size() == 6);
  CHECK(none.val.size() == 2);
  CHECK_THROWS_AS(split(std::vector<Sample>(samples.begin(), samples.begin() + 4), 1), ConfigError);
  CHECK(parse_augment_policy("paper") == AugmentPolicy::Paper);
  CHECK_THROWS_AS(parse_augment_policy("all"), ConfigError);
}

TEST_CASE("synthetic blobs") {
  const auto a = synth_blobs(small_synth(24, 9));
  const auto b = synth_blobs(small_synth(24, 9));
  REQUIRE(a.size() == 24);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.data == b[i].image.data);
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].true_count >= 3);
    CHECK(a[i].true_count <= 12);
    int components = 0;
    oracle::flood_fill_labels(a[i].mask, &components);
    CHECK(components == a[i].true_count);
    for (float v : a[i].image.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
  CHECK(a[0].id == "blob_0000");
  CHECK(synth_blobs(small_synth(4, 10))[0].image.data != a[0].image.data);

  SynthParams crowded = small_synth(1, 1);
  crowded.min_count = crowded.max_count = 200;
  CHECK_THROWS_AS(synth_blobs(crowded), GenerationError);
}

TEST_CASE("batch tensors") {
  const auto s = synth_blobs(small_synth(2, 1));
  const auto x = images_tensor({&s[0], &s[1]});
  CHECK(x.shape() == Shape{2, 1, 32, 32});
  const auto y = masks_tensor({&s[0], &s[1]});
  CHECK(y.shape() == Shape{2, 32, 32});
  double area = 0;
  for (float v : y.data()) area += v;
  CHECK(area == static_cast<double>(s[0].mask.area() + s[1].mask.area()));
}
