#pragma once

// Classical counting baselines: Otsu thresholding, marker-controlled
// watershed and the Hough circle transform.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pidcount/image.hpp"
#include "pidcount/postproc.hpp"

namespace pidcount {

struct BaselineParams {
  PostprocParams post;
  bool dark_foreground = false;  // objects darker than the background

  double watershed_sigma = 0.5;
  double marker_min_distance = 3.0;

  double hough_sigma = 1.0;
  double hough_r_min = 2.0;
  double hough_r_max = 5.0;
  double hough_r_step = 1.0;
  double hough_edge_threshold = 0.5;  // fraction of the strongest Sobel response
  double hough_peak_threshold = 0.75;  // fraction of the circumference with votes
  double hough_nms_radius = 5.0;       // centre spacing; 0 = hough_r_min

  void validate() const;
};

enum class BaselineMethod { Otsu, Watershed, Hough };
BaselineMethod parse_baseline_method(const std::string& name);
const char* baseline_method_name(BaselineMethod method);

/// Per-pixel intensity (channel mean) quantized to 0..255.
std::vector<std::uint8_t> quantize_gray(const Image& image);
std::array<std::uint64_t, 256> histogram256(const std::vector<std::uint8_t>& bins);

/// Bin t maximizing the between-class variance of {<= t} vs {> t}, compared
/// exactly in integer arithmetic; the lowest bin wins ties. Throws
/// ValidationError when fewer than two bins are populated.
int otsu_bin(const std::array<std::uint64_t, 256>& histogram);
/// Threshold in [0, 1]: a pixel is foreground iff its value exceeds it.
float otsu_threshold(const Image& gray);

/// Separable Gaussian blur of the channel mean, replicated borders.
std::vector<float> gaussian_blur(const Image& image, double sigma);

struct Circle {
  double cy = 0, cx = 0, r = 0;
  double score = 0;  // supported fraction of the circumference
};

struct BaselineResult {
  int count = 0;
  LabelMap labels;  // Hough: circle index, stronger circles painted over weaker ones
  Mask mask;        // predicted foreground used for the segmentation metrics
  std::vector<Circle> circles;  // Hough only
};

BaselineResult otsu_count(const Image& gray, const BaselineParams& params);
BaselineResult watershed_count(const Image& gray, const BaselineParams& params);
BaselineResult hough_circle_count(const Image& gray, const BaselineParams& params);
BaselineResult run_baseline(BaselineMethod method, const Image& gray, const BaselineParams& params);

}  // namespace pidcount
