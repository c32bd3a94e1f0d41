#include "pidcount/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>

#include "pidcount/errors.hpp"
#include "pidcount/metrics.hpp"

namespace pidcount {

void BaselineParams::validate() const {
  post.validate();
  if (watershed_sigma < 0 || hough_sigma < 0) throw ConfigError("smoothing sigma must be >= 0");
  if (marker_min_distance < 0) throw ConfigError("marker_min_distance must be >= 0");
  if (hough_r_min < 1.0) throw ConfigError("hough_r_min must be >= 1");
  if (!(hough_r_max > hough_r_min)) throw ConfigError("hough_r_max must exceed hough_r_min");
  if (!(hough_r_step > 0)) throw ConfigError("hough_r_step must be > 0");
  if (!(hough_edge_threshold > 0 && hough_edge_threshold < 1)) throw ConfigError("hough_edge_threshold must lie in (0, 1)");
  if (!(hough_peak_threshold > 0)) throw ConfigError("hough_peak_threshold must be > 0");
  if (hough_nms_radius < 0) throw ConfigError("hough_nms_radius must be >= 0");
}

BaselineMethod parse_baseline_method(const std::string& name) {
  if (name == "otsu") return BaselineMethod::Otsu;
  if (name == "watershed") return BaselineMethod::Watershed;
  if (name == "hough") return BaselineMethod::Hough;
  throw ConfigError("unknown baseline method '" + name + "' (expected otsu, watershed or hough)");
}

const char* baseline_method_name(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::Otsu: return "otsu";
    case BaselineMethod::Watershed: return "watershed";
    case BaselineMethod::Hough: return "hough";
  }
  return "?";
}

namespace {

float gray_at(const Image& img, std::size_t pixel) {
  float s = 0.0f;
  for (int c = 0; c < img.channels; ++c) s += img.data[pixel * img.channels + c];
  return s / static_cast<float>(img.channels);
}

/// Channel-mean copy, inverted when objects are dark.
Image to_gray(const Image& img, bool invert) {
  Image g(img.height, img.width, 1);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const float v = gray_at(img, i);
    g.data[i] = invert ? 1.0f - v : v;
  }
  return g;
}

}  // namespace

std::vector<std::uint8_t> quantize_gray(const Image& image) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(image.height) * image.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(gray_at(image, i), 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

std::array<std::uint64_t, 256> histogram256(const std::vector<std::uint8_t>& bins) {
  std::array<std::uint64_t, 256> h{};
  for (auto b : bins) ++h[b];
  return h;
}

int otsu_bin(const std::array<std::uint64_t, 256>& hist) {
  using i128 = __int128;
  using u128 = unsigned __int128;
  std::uint64_t N = 0, S = 0;
  int populated = 0;
  for (int b = 0; b < 256; ++b) {
    N += hist[b];
    S += hist[b] * static_cast<std::uint64_t>(b);
    populated += hist[b] > 0;
  }
  if (populated < 2) throw ValidationError("otsu: degenerate input, fewer than two intensity levels");
  if (N >= (1ULL << 28)) throw ConfigError("otsu: more than 2^28 pixels");

  // between-class variance up to the constant 1/N^2: D^2 / (n0 n1) with
  // D = s0 n1 - s1 n0; kept as quotient plus remainder so comparisons are exact
  int best = -1;
  u128 best_q = 0, best_r = 0, best_m = 1;
  std::uint64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[t];
    s0 += hist[t] * static_cast<std::uint64_t>(t);
    const std::uint64_t n1 = N - n0, s1 = S - s0;
    if (n0 == 0 || n1 == 0) continue;
    const i128 D = static_cast<i128>(s0) * n1 - static_cast<i128>(s1) * n0;
    const u128 D2 = static_cast<u128>(D < 0 ? -D : D) * static_cast<u128>(D < 0 ? -D : D);
    const u128 m = static_cast<u128>(n0) * n1;
    const u128 q = D2 / m, r = D2 % m;
    const bool better = best < 0 || q > best_q || (q == best_q && r * best_m > best_r * m);
    if (better) {
      best = t;
      best_q = q;
      best_r = r;
      best_m = m;
    }
  }
  return best;
}

float otsu_threshold(const Image& gray) {
  const int t = otsu_bin(histogram256(quantize_gray(gray)));
  return (static_cast<float>(t) + 0.5f) / 255.0f;
}

std::vector<float> gaussian_blur(const Image& image, double sigma) {
  const int H = image.height, W = image.width;
  std::vector<float> src(static_cast<std::size_t>(H) * W);
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = gray_at(image, i);
  if (sigma <= 0) return src;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;

  std::vector<float> tmp(src.size()), out(src.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * src[y * W + std::clamp(x + i, 0, W - 1)];
      tmp[y * W + x] = static_cast<float>(s);
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[std::clamp(y + i, 0, H - 1) * W + x];
      out[y * W + x] = static_cast<float>(s);
    }
  }
  return out;
}

BaselineResult otsu_count(const Image& image, const BaselineParams& params) {
  params.validate();
  const Image gray = to_gray(image, params.dark_foreground);
  BaselineResult r;
  Mask fg(gray.height, gray.width);
  const auto bins = quantize_gray(gray);
  const auto hist = histogram256(bins);
  // a constant image has no threshold; it holds no objects either
  if (std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; }) >= 2) {
    const int t = otsu_bin(hist);
    for (std::size_t i = 0; i < bins.size(); ++i) fg.data[i] = bins[i] > t ? 1 : 0;
  }
  auto counted = count_mask(fg, params.post);
  r.count = counted.count;
  r.labels = std::move(counted.labels);
  r.mask = std::move(counted.filtered);
  return r;
}

BaselineResult watershed_count(const Image& image, const BaselineParams& params) {
  params.validate();
  const int H = image.height, W = image.width;
  Image smooth(H, W, 1);
  smooth.data = gaussian_blur(to_gray(image, params.dark_foreground), params.watershed_sigma);

  BaselineResult r;
  r.labels.height = H;
  r.labels.width = W;
  r.labels.labels.assign(static_cast<std::size_t>(H) * W, 0);
  const auto bins = quantize_gray(smooth);
  const auto hist = histogram256(bins);
  if (std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; }) < 2) {
    r.mask = Mask(H, W);
    return r;  // blank image: nothing to split
  }
  const int t = otsu_bin(hist);
  Mask fg(H, W);
  for (std::size_t i = 0; i < bins.size(); ++i) fg.data[i] = bins[i] > t ? 1 : 0;
  fg = morph_filter(fg, params.post);
  r.mask = fg;
  if (fg.area() == 0) return r;

  Mask background(H, W);
  for (std::size_t i = 0; i < fg.size(); ++i) background.data[i] = fg.data[i] ? 0 : 1;
  // squared distances are integers, so plateau equality tests are exact
  std::vector<double> dist = squared_distance_transform(background);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (!fg.data[i]) dist[i] = 0.0;
    else if (std::isinf(dist[i])) dist[i] = static_cast<double>(H) * H + static_cast<double>(W) * W;  // no background at all
  }
  const LabelMap components = label_components_8(fg);

  // maximal plateaus: 8-connected equal-distance sets with no higher neighbour
  std::vector<int> plateau(fg.size(), 0);
  struct Marker {
    double height;
    int first;  // raster index of the first pixel
    int component;
    std::vector<int> pixels;
  };
  std::vector<Marker> markers;
  for (int start = 0; start < H * W; ++start) {
    if (!fg.data[start] || plateau[start]) continue;
    const double h = dist[start];
    const int id = static_cast<int>(markers.size()) + 1;
    std::vector<int> pixels{start}, stack{start};
    plateau[start] = id;
    bool maximal = true;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / W, x = p % W;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if ((dy == 0 && dx == 0) || yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          const int q = yy * W + xx;
          if (!fg.data[q]) continue;
          if (dist[q] > h) maximal = false;
          if (dist[q] == h && !plateau[q]) {
            plateau[q] = id;
            pixels.push_back(q);
            stack.push_back(q);
          }
        }
      }
    }
    // plateau ids are kept for non-maximal sets too so they are visited once
    markers.push_back({maximal ? h : -1.0, start, components.labels[start], std::move(pixels)});
  }

  std::vector<const Marker*> order;
  for (const auto& m : markers) {
    if (m.height >= 0) order.push_back(&m);
  }
  std::stable_sort(order.begin(), order.end(), [](const Marker* a, const Marker* b) { return a->height > b->height; });
  std::vector<const Marker*> kept;
  const double min_d2 = params.marker_min_distance * params.marker_min_distance;
  for (const Marker* m : order) {
    bool clear = true;
    for (const Marker* k : kept) {
      if (k->component != m->component) continue;
      const double dy = m->first / W - k->first / W, dx = m->first % W - k->first % W;
      if (dy * dy + dx * dx < min_d2) {
        clear = false;
        break;
      }
    }
    if (clear) kept.push_back(m);
  }

  // priority flood from the markers, highest distance first; FIFO among equals
  auto& labels = r.labels.labels;
  using Entry = std::tuple<double, std::uint64_t, int>;  // -distance, sequence, pixel
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  std::uint64_t seq = 0;
  std::vector<std::uint8_t> queued(fg.size(), 0);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    for (int p : kept[k]->pixels) {
      labels[p] = static_cast<int>(k) + 1;
      queued[p] = 1;
    }
  }
  auto push_neighbours = [&](int p) {
    const int y = p / W, x = p % W;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        const int q = yy * W + xx;
        if (!fg.data[q] || queued[q]) continue;
        queued[q] = 1;
        labels[q] = labels[p];
        queue.emplace(-dist[q], seq++, q);
      }
    }
  };
  for (const Marker* m : kept) {
    for (int p : m->pixels) push_neighbours(p);
  }
  while (!queue.empty()) {
    const int p = std::get<2>(queue.top());
    queue.pop();
    push_neighbours(p);
  }

  // renumber consecutively in raster order
  std::map<int, int> renumber;
  for (auto& l : labels) {
    if (l == 0) continue;
    auto [it, inserted] = renumber.emplace(l, static_cast<int>(renumber.size()) + 1);
    l = it->second;
  }
  r.labels.count = static_cast<int>(renumber.size());
  r.count = r.labels.count;
  return r;
}

BaselineResult hough_circle_count(const Image& image, const BaselineParams& params) {
  params.validate();
  const int H = image.height, W = image.width;
  const auto g = gaussian_blur(to_gray(image, params.dark_foreground), params.hough_sigma);
  auto at = [&](int y, int x) { return g[std::clamp(y, 0, H - 1) * W + std::clamp(x, 0, W - 1)]; };

  std::vector<float> mag(static_cast<std::size_t>(H) * W);
  float peak = 0.0f;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const float gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                       (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const float gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                       (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      mag[y * W + x] = std::hypot(gx, gy);
      peak = std::max(peak, mag[y * W + x]);
    }
  }
  BaselineResult r;
  r.mask = Mask(H, W);
  r.labels.height = H;
  r.labels.width = W;
  r.labels.labels.assign(static_cast<std::size_t>(H) * W, 0);
  if (peak <= 1e-6f) return r;

  std::vector<int> edges;
  const float cut = static_cast<float>(params.hough_edge_threshold) * peak;
  for (int i = 0; i < H * W; ++i) {
    if (mag[i] >= cut) edges.push_back(i);
  }

  std::vector<double> radii;
  for (double rr = params.hough_r_min; rr <= params.hough_r_max + 1e-9; rr += params.hough_r_step) radii.push_back(rr);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<float> acc(radii.size() * plane, 0.0f);
  std::vector<int> stamp(plane, -1);
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const double rr = radii[ri];
    const int steps = std::max(16, static_cast<int>(std::ceil(4.0 * M_PI * rr)));
    std::vector<std::pair<int, int>> offsets;
    for (int s = 0; s < steps; ++s) {
      const double a = 2.0 * M_PI * s / steps;
      const std::pair<int, int> o{static_cast<int>(std::lround(rr * std::sin(a))),
                                  static_cast<int>(std::lround(rr * std::cos(a)))};
      if (std::find(offsets.begin(), offsets.end(), o) == offsets.end()) offsets.push_back(o);
    }
    float* layer = acc.data() + ri * plane;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const int y = edges[e] / W, x = edges[e] % W;
      const int tag = static_cast<int>(ri * edges.size() + e);
      for (auto [dy, dx] : offsets) {
        const int cy = y + dy, cx = x + dx;
        if (cy < 0 || cy >= H || cx < 0 || cx >= W) continue;
        const int c = cy * W + cx;
        if (stamp[c] == tag) continue;
        stamp[c] = tag;
        layer[c] += 1.0f;
      }
    }
    // score = fraction of the rasterized circle covered by edge pixels
    const float norm = static_cast<float>(offsets.size());
    for (std::size_t c = 0; c < plane; ++c) layer[c] /= norm;
  }

  std::vector<Circle> candidates;
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    for (std::size_t c = 0; c < plane; ++c) {
      const float v = acc[ri * plane + c];
      if (v >= params.hough_peak_threshold) {
        candidates.push_back({static_cast<double>(c / W), static_cast<double>(c % W), radii[ri], v});
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Circle& a, const Circle& b) { return a.score > b.score; });
  const double nms = params.hough_nms_radius > 0 ? params.hough_nms_radius : params.hough_r_min;
  for (const auto& c : candidates) {
    bool clear = true;
    for (const auto& k : r.circles) {
      if (std::hypot(c.cy - k.cy, c.cx - k.cx) < nms) {
        clear = false;
        break;
      }
    }
    if (clear) r.circles.push_back(c);
  }

  // detections rasterized as disks; overlaps keep the stronger circle
  for (std::size_t k = r.circles.size(); k-- > 0;) {
    const auto& c = r.circles[k];
    for (int y = std::max(0, static_cast<int>(c.cy - c.r)); y <= std::min(H - 1, static_cast<int>(c.cy + c.r)); ++y) {
      for (int x = std::max(0, static_cast<int>(c.cx - c.r)); x <= std::min(W - 1, static_cast<int>(c.cx + c.r)); ++x) {
        if ((y - c.cy) * (y - c.cy) + (x - c.cx) * (x - c.cx) <= c.r * c.r) {
          r.mask.at(y, x) = 1;
          r.labels.labels[y * W + x] = static_cast<int>(k) + 1;
        }
      }
    }
  }
  r.count = static_cast<int>(r.circles.size());
  r.labels.count = r.count;
  return r;
}

BaselineResult run_baseline(BaselineMethod method, const Image& gray, const BaselineParams& params) {
  switch (method) {
    case BaselineMethod::Otsu: return otsu_count(gray, params);
    case BaselineMethod::Watershed: return watershed_count(gray, params);
    case BaselineMethod::Hough: return hough_circle_count(gray, params);
  }
  throw ConfigError("unknown baseline method");
}

}  // namespace pidcount
