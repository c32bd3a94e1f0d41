#pragma once

// Raster plots of the training curves and mask overlays.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "pidcount/image.hpp"
#include "pidcount/trainer.hpp"

namespace pidcount {

struct Series {
  std::string name;
  std::vector<double> values;  // one per epoch
  std::array<float, 3> color;
};

/// Line chart of one or more per-epoch series. y_min == y_max picks the
/// range from the data.
Image line_chart(const std::vector<Series>& series, const std::string& y_label, double y_min = 0.0,
                 double y_max = 0.0, int width = 640, int height = 400);

/// loss.png and iou.png (train and val) in `directory`.
void write_curve_plots(const std::filesystem::path& directory, const TrainingCurves& curves);

TrainingCurves read_curves_csv(const std::filesystem::path& path);

/// RGB overlay on the gray image: agreement (TP) green, prediction only (FP)
/// red, ground truth only (FN) blue.
Image overlay(const Image& image, const Mask& pred, const Mask& gt);

}  // namespace pidcount
