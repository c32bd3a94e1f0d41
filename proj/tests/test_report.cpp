#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pidcount/errors.hpp"
#include "pidcount/report.hpp"

using namespace pidcount;

TEST_CASE("line chart") {
  const auto img = line_chart({{"train", {1.0, 0.5, 0.25}, {1, 0, 0}}, {"val", {0.9, 0.6, 0.4}, {0, 0, 1}}}, "loss");
  CHECK(img.width == 640);
  CHECK(img.height == 400);
  CHECK(img.channels == 3);
  int red = 0, blue = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      red += img.at(y, x, 0) == 1 && img.at(y, x, 1) == 0 && img.at(y, x, 2) == 0;
      blue += img.at(y, x, 0) == 0 && img.at(y, x, 1) == 0 && img.at(y, x, 2) == 1;
    }
  CHECK(red > 100);
  CHECK(blue > 100);

  // a single epoch and non-finite values must not break the renderer
  CHECK(line_chart({{"x", {0.5}, {0, 1, 0}}}, "IoU", 0, 1).width == 640);
  CHECK(line_chart({{"x", {NAN, 1.0}, {0, 1, 0}}}, "loss").width == 640);
}

TEST_CASE("curve plots are written") {
  const auto dir = std::filesystem::temp_directory_path() / "pidcount_test_plots";
  TrainingCurves c;
  c.train_loss = c.val_loss = {0.7, 0.4, 0.3};
  c.train_iou = c.val_iou = {0.3, 0.6, 0.7};
  write_curve_plots(dir, c);
  CHECK(read_png(dir / "loss.png").width == 640);
  CHECK(read_png(dir / "iou.png").height == 400);
  std::filesystem::remove_all(dir);
}

TEST_CASE("overlay colours") {
  Image img(1, 4, 1);
  Mask pred(1, 4), gt(1, 4);
  pred.at(0, 0) = gt.at(0, 0) = 1;  // TP
  pred.at(0, 1) = 1;                // FP
  gt.at(0, 2) = 1;                  // FN
  const auto o = overlay(img, pred, gt);
  CHECK(o.at(0, 0, 1) > o.at(0, 0, 0));
  CHECK(o.at(0, 0, 1) > o.at(0, 0, 2));
  CHECK(o.at(0, 1, 0) > o.at(0, 1, 1));
  CHECK(o.at(0, 2, 2) > o.at(0, 2, 0));
  CHECK(o.at(0, 3, 0) == 0.0f);
  CHECK_THROWS_AS(overlay(img, pred, Mask(2, 2)), DimensionError);
}
