#include "pidcount/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pidcount/errors.hpp"

namespace pidcount {

void PostprocParams::validate() const {
  if (!(prob_threshold > 0.0f && prob_threshold < 1.0f)) throw ConfigError("prob_threshold must lie in (0, 1)");
  if (min_area < 0) throw ConfigError("min_area must be >= 0");
}

PostprocParams PostprocParams::scaled_for(int size) const {
  PostprocParams p = *this;
  const double s = static_cast<double>(size) / 256.0;
  p.min_area = static_cast<int>(std::lround(min_area * s * s));
  return p;
}

std::vector<Mask> binarize(const Tensor& probs, float threshold) {
  if (probs.ndim() != 4 || probs.dim(1) != 2) throw DimensionError("binarize expects [N,2,H,W], got " + shape_str(probs.shape()));
  const int N = probs.dim(0), H = probs.dim(2), W = probs.dim(3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const auto d = probs.data();
  std::vector<Mask> out;
  out.reserve(N);
  for (int n = 0; n < N; ++n) {
    Mask m(H, W);
    const float* fg = d.data() + (2 * static_cast<std::size_t>(n) + 1) * plane;
    for (std::size_t i = 0; i < plane; ++i) m.data[i] = fg[i] > threshold ? 1 : 0;
    out.push_back(std::move(m));
  }
  return out;
}

// Outside the image counts as background for erosion, so objects touching the
// border lose their edge row like any other boundary.
Mask erode3x3(const Mask& mask) {
  Mask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width || !mask.at(yy, xx)) {
            all = false;
            break;
          }
        }
      }
      out.at(y, x) = all ? 1 : 0;
    }
  }
  return out;
}

Mask dilate3x3(const Mask& mask) {
  Mask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width) out.at(yy, xx) = 1;
        }
      }
    }
  }
  return out;
}

Mask morph_filter(const Mask& mask, const PostprocParams& params) {
  params.validate();
  Mask m = params.opening ? dilate3x3(erode3x3(mask)) : mask;
  if (params.min_area <= 1) return m;
  const LabelMap lm = label_components_8(m);
  const auto areas = component_areas(lm);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const int l = lm.labels[i];
    if (l > 0 && areas[l] < static_cast<std::size_t>(params.min_area)) m.data[i] = 0;
  }
  return m;
}

namespace {

int find_root(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) std::swap(a, b);
  parent[a] = b;  // smaller provisional label becomes the root
}

}  // namespace

LabelMap label_components_8(const Mask& mask) {
  LabelMap lm;
  lm.height = mask.height;
  lm.width = mask.width;
  lm.labels.assign(mask.size(), 0);
  std::vector<int> parent{0};
  const int W = mask.width;

  // first pass: provisional labels from the already visited neighbours
  // (W, NW, N, NE)
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!mask.at(y, x)) continue;
      int nb[4], k = 0;
      if (x > 0 && mask.at(y, x - 1)) nb[k++] = lm.labels[y * W + x - 1];
      if (y > 0) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx >= 0 && xx < W && mask.at(y - 1, xx)) nb[k++] = lm.labels[(y - 1) * W + xx];
        }
      }
      int label;
      if (k == 0) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      } else {
        label = *std::min_element(nb, nb + k);
        for (int i = 0; i < k; ++i) unite(parent, label, nb[i]);
      }
      lm.labels[y * W + x] = label;
    }
  }

  // second pass: resolve equivalences, renumber in order of first appearance
  std::vector<int> final_label(parent.size(), 0);
  int next = 0;
  for (auto& l : lm.labels) {
    if (l == 0) continue;
    const int root = find_root(parent, l);
    if (final_label[root] == 0) final_label[root] = ++next;
    l = final_label[root];
  }
  lm.count = next;
  return lm;
}

std::vector<std::size_t> component_areas(const LabelMap& labels) {
  std::vector<std::size_t> areas(static_cast<std::size_t>(labels.count) + 1, 0);
  for (int l : labels.labels) ++areas[l];
  return areas;
}

CountResult count_mask(const Mask& binary, const PostprocParams& params) {
  CountResult r;
  r.filtered = morph_filter(binary, params);
  r.labels = label_components_8(r.filtered);
  r.count = r.labels.count;
  return r;
}

CountResult count_objects(const Tensor& probs, const PostprocParams& params, int item) {
  params.validate();
  auto masks = binarize(probs, params.prob_threshold);
  if (item < 0 || item >= static_cast<int>(masks.size())) throw DimensionError("count_objects: batch item out of range");
  return count_mask(masks[item], params);
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
  if (labels.count > 65535) throw ValidationError("label map has more than 65535 components");
  std::vector<std::uint16_t> words(labels.labels.begin(), labels.labels.end());
  write_png_gray16(path, labels.height, labels.width, words.data());
}

}  // namespace pidcount
