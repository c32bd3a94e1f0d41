#pragma once

// Probability map -> object count: binarize, morphological clean-up and
// 8-connected component labeling.

#include <filesystem>
#include <vector>

#include "pidcount/image.hpp"
#include "pidcount/tensor.hpp"

namespace pidcount {

struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // 0 = background, components 1..count
  int count = 0;

  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct PostprocParams {
  float prob_threshold = 0.5f;
  int min_area = 9;  // pixels at 256x256
  bool opening = true;

  void validate() const;
  /// min_area rescaled by (size / 256)^2, rounded to nearest.
  PostprocParams scaled_for(int size) const;
};

/// One mask per batch item: foreground iff p_fg > threshold (ties lose).
std::vector<Mask> binarize(const Tensor& probs, float threshold = 0.5f);

Mask erode3x3(const Mask& mask);
Mask dilate3x3(const Mask& mask);
/// Optional 3x3 opening, then removal of components smaller than min_area.
Mask morph_filter(const Mask& mask, const PostprocParams& params);

/// Two-pass labeling with union-find, consecutive labels in raster order of
/// first appearance.
LabelMap label_components_8(const Mask& mask);
/// Component sizes indexed by label (entry 0 is the background area).
std::vector<std::size_t> component_areas(const LabelMap& labels);

struct CountResult {
  int count = 0;
  LabelMap labels;
  Mask filtered;
};

/// binarize -> morph_filter -> label_components_8 for a single probability map
/// of shape [1,2,H,W] (or the given batch item).
CountResult count_objects(const Tensor& probs, const PostprocParams& params, int item = 0);
CountResult count_mask(const Mask& binary, const PostprocParams& params);

/// Labels written as 16-bit gray.
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace pidcount
