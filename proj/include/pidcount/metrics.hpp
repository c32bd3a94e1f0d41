#pragma once

// Segmentation and counting metrics.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pidcount/image.hpp"

namespace pidcount {

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

/// Throws DimensionError on a shape mismatch.
Confusion confusion(const Mask& pred, const Mask& gt);

struct SegmentationScores {
  double accuracy = 0, dice = 0, jaccard = 0, precision = 0;
};

/// Two empty masks score dice = jaccard = 1; precision with no predicted
/// positives is 1 when the GT is empty too, else 0.
SegmentationScores segmentation_metrics(const Confusion& c);

/// 1 - |n_pred - n_gt| / n_gt, not clamped. Throws UndefinedMetricError for n_gt == 0.
double counting_accuracy(long n_pred, long n_gt);

struct HausdorffResult {
  double distance = 0.0;
  bool one_empty = false;  // distance is then the image diagonal
};

/// Exact symmetric Hausdorff distance between the foreground pixel sets,
/// through squared Euclidean distance transforms.
HausdorffResult hausdorff(const Mask& a, const Mask& b);

/// Exact squared Euclidean distance to the nearest foreground pixel
/// (separable lower-envelope transform). Empty masks give +inf everywhere.
std::vector<double> squared_distance_transform(const Mask& foreground);

struct ImageMetrics {
  std::string id;
  std::string method;
  SegmentationScores seg;
  long n_pred = 0;
  long n_gt = 0;
  std::optional<double> counting_accuracy;  // empty when n_gt == 0
  double hausdorff_px = 0.0;
  bool hausdorff_one_empty = false;
};

ImageMetrics evaluate_image(const std::string& id, const std::string& method, const Mask& pred, const Mask& gt,
                            long n_pred, long n_gt);

struct MetricsReport {
  std::string method;
  std::vector<ImageMetrics> rows;
  SegmentationScores mean;
  double counting_accuracy = 0.0;
  double hausdorff_px = 0.0;
  std::size_t counting_excluded = 0;
  std::size_t hausdorff_flagged = 0;
};

/// Unweighted means over rows; rows without a counting accuracy are left
/// out of that mean and tallied in counting_excluded.
MetricsReport aggregate(const std::string& method, std::vector<ImageMetrics> rows);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ImageMetrics>& rows);
std::string metrics_json(const MetricsReport& report);
void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace pidcount
