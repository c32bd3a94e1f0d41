#pragma once

// Slow, obviously-correct implementations used as test oracles.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "pidcount/image.hpp"
#include "pidcount/random.hpp"

namespace oracle {

/// Bernoulli(density) mask.
inline pidcount::Mask random_mask(int h, int w, double density, pidcount::Rng& rng) {
  pidcount::Mask m(h, w);
  for (auto& v : m.data) v = rng.uniform() < density ? 1 : 0;
  return m;
}

/// Recursive 8-neighbour flood fill; components numbered in raster order of
/// their first pixel.
inline std::vector<int> flood_fill_labels(const pidcount::Mask& m, int* count = nullptr) {
  std::vector<int> label(m.size(), 0);
  int next = 0;
  std::function<void(int, int, int)> fill = [&](int y, int x, int id) {
    if (y < 0 || x < 0 || y >= m.height || x >= m.width) return;
    const std::size_t i = static_cast<std::size_t>(y) * m.width + x;
    if (!m.data[i] || label[i]) return;
    label[i] = id;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dy || dx) fill(y + dy, x + dx, id);
      }
    }
  };
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(y, x) && !label[static_cast<std::size_t>(y) * m.width + x]) fill(y, x, ++next);
    }
  }
  if (count) *count = next;
  return label;
}

/// O(|A||B|) symmetric Hausdorff distance as an integer squared distance;
/// -1 when either set is empty.
inline long long brute_hausdorff_sq(const pidcount::Mask& a, const pidcount::Mask& b) {
  auto points = [](const pidcount::Mask& m) {
    std::vector<std::array<int, 2>> p;
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (m.at(y, x)) p.push_back({y, x});
      }
    }
    return p;
  };
  const auto pa = points(a), pb = points(b);
  if (pa.empty() || pb.empty()) return -1;
  auto directed = [](const auto& from, const auto& to) {
    long long worst = 0;
    for (const auto& p : from) {
      long long best = std::numeric_limits<long long>::max();
      for (const auto& q : to) {
        const long long dy = p[0] - q[0], dx = p[1] - q[1];
        best = std::min(best, dy * dy + dx * dx);
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(pa, pb), directed(pb, pa));
}

/// Exhaustive Otsu: the bin t (class 0 = bins <= t) maximizing the
/// between-class variance, compared as exact rationals. The first maximum
/// wins. -1 when fewer than two bins are populated.
inline int exhaustive_otsu(const std::array<std::uint64_t, 256>& hist) {
  // sigma_b^2 * N^3 = (s0*n1 - s1*n0)^2 / (n0*n1)
  using i128 = __int128;
  i128 n = 0, s = 0;
  for (int b = 0; b < 256; ++b) {
    n += hist[b];
    s += static_cast<i128>(hist[b]) * b;
  }
  int best = -1;
  i128 best_num = 0, best_den = 1;
  i128 n0 = 0, s0 = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[t];
    s0 += static_cast<i128>(hist[t]) * t;
    const i128 n1 = n - n0, s1 = s - s0;
    if (n0 == 0 || n1 == 0) continue;
    const i128 d = s0 * n1 - s1 * n0;
    const i128 num = d * d, den = n0 * n1;
    if (best < 0 || num * best_den > best_num * den) {
      best = t;
      best_num = num;
      best_den = den;
    }
  }
  return best;
}

}  // namespace oracle
