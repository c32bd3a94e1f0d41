#include "pidcount/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "pidcount/errors.hpp"

namespace pidcount {

Confusion confusion(const Mask& pred, const Mask& gt) {
  if (!pred.same_shape(gt)) {
    throw DimensionError("confusion: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

SegmentationScores segmentation_metrics(const Confusion& c) {
  SegmentationScores s;
  const double tp = static_cast<double>(c.tp);
  s.accuracy = c.total() ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 1.0;
  const std::size_t pred_pos = c.tp + c.fp, gt_pos = c.tp + c.fn;
  if (pred_pos + gt_pos == 0) {
    s.dice = s.jaccard = 1.0;
  } else {
    s.dice = 2.0 * tp / static_cast<double>(pred_pos + gt_pos);
    s.jaccard = tp / static_cast<double>(c.tp + c.fp + c.fn);
  }
  if (pred_pos == 0) {
    s.precision = gt_pos == 0 ? 1.0 : 0.0;
  } else {
    s.precision = tp / static_cast<double>(pred_pos);
  }
  return s;
}

double counting_accuracy(long n_pred, long n_gt) {
  if (n_gt == 0) throw UndefinedMetricError("counting accuracy is undefined for zero ground-truth objects");
  return 1.0 - static_cast<double>(std::labs(n_pred - n_gt)) / static_cast<double>(n_gt);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher). f holds
// squared distances along one line; result written to d.
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      k = 0;
      continue;
    }
    auto meet = [&](int p) {
      return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
    };
    double s = meet(v[k]);
    while (s <= z[k]) {  // z[0] = -inf stops this at k = 0
      --k;
      s = meet(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const Mask& fg) {
  const int H = fg.height, W = fg.width;
  std::vector<double> grid(static_cast<std::size_t>(H) * W);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = fg.data[i] ? 0.0 : kInf;
  const int n = std::max(H, W);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < W; ++x) {
    for (int y = 0; y < H; ++y) f[y] = grid[static_cast<std::size_t>(y) * W + x];
    edt_1d(f.data(), d.data(), H, v, z);
    for (int y = 0; y < H; ++y) grid[static_cast<std::size_t>(y) * W + x] = d[y];
  }
  for (int y = 0; y < H; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * W;
    std::copy(row, row + W, f.begin());
    edt_1d(f.data(), row, W, v, z);
  }
  return grid;
}

HausdorffResult hausdorff(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw DimensionError("hausdorff: mask shapes differ");
  const bool ea = a.area() == 0, eb = b.area() == 0;
  if (ea && eb) return {0.0, false};
  if (ea || eb) return {std::hypot(static_cast<double>(a.height), static_cast<double>(a.width)), true};
  const auto da = squared_distance_transform(a), db = squared_distance_transform(b);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.data[i]) worst = std::max(worst, db[i]);
    if (b.data[i]) worst = std::max(worst, da[i]);
  }
  return {std::sqrt(worst), false};
}

ImageMetrics evaluate_image(const std::string& id, const std::string& method, const Mask& pred, const Mask& gt,
                            long n_pred, long n_gt) {
  ImageMetrics m;
  m.id = id;
  m.method = method;
  m.seg = segmentation_metrics(confusion(pred, gt));
  m.n_pred = n_pred;
  m.n_gt = n_gt;
  if (n_gt > 0) m.counting_accuracy = counting_accuracy(n_pred, n_gt);
  const auto h = hausdorff(pred, gt);
  m.hausdorff_px = h.distance;
  m.hausdorff_one_empty = h.one_empty;
  return m;
}

MetricsReport aggregate(const std::string& method, std::vector<ImageMetrics> rows) {
  MetricsReport r;
  r.method = method;
  r.rows = std::move(rows);
  if (r.rows.empty()) throw ValidationError("aggregate: no rows");
  std::size_t counted = 0;
  for (const auto& m : r.rows) {
    r.mean.accuracy += m.seg.accuracy;
    r.mean.dice += m.seg.dice;
    r.mean.jaccard += m.seg.jaccard;
    r.mean.precision += m.seg.precision;
    r.hausdorff_px += m.hausdorff_px;
    if (m.hausdorff_one_empty) ++r.hausdorff_flagged;
    if (m.counting_accuracy) {
      r.counting_accuracy += *m.counting_accuracy;
      ++counted;
    } else {
      ++r.counting_excluded;
    }
  }
  const double n = static_cast<double>(r.rows.size());
  r.mean.accuracy /= n;
  r.mean.dice /= n;
  r.mean.jaccard /= n;
  r.mean.precision /= n;
  r.hausdorff_px /= n;
  r.counting_accuracy = counted ? r.counting_accuracy / static_cast<double>(counted)
                                : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ImageMetrics>& rows) {
  std::ofstream out(path);
  out << "id,method,accuracy,dice,jaccard,precision,n_pred,n_gt,counting_accuracy,hausdorff_px,hausdorff_one_empty\n";
  char buf[512];
  for (const auto& m : rows) {
    std::string ca = m.counting_accuracy ? "" : "nan";
    if (m.counting_accuracy) {
      std::snprintf(buf, sizeof buf, "%.17g", *m.counting_accuracy);
      ca = buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%ld,%ld,%s,%.17g,%d", m.seg.accuracy, m.seg.dice,
                  m.seg.jaccard, m.seg.precision, m.n_pred, m.n_gt, ca.c_str(), m.hausdorff_px,
                  m.hausdorff_one_empty ? 1 : 0);
    out << m.id << ',' << m.method << ',' << buf << '\n';
  }
  if (!out) throw Error("cannot write " + path.string());
}

std::string metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["images"] = r.rows.size();
  j["accuracy"] = r.mean.accuracy;
  j["dice"] = r.mean.dice;
  j["jaccard"] = r.mean.jaccard;
  j["precision"] = r.mean.precision;
  if (std::isnan(r.counting_accuracy)) {
    j["counting_accuracy"] = nullptr;
  } else {
    j["counting_accuracy"] = r.counting_accuracy;
  }
  j["hausdorff_px"] = r.hausdorff_px;
  j["counting_excluded"] = r.counting_excluded;
  j["hausdorff_one_empty"] = r.hausdorff_flagged;
  return j.dump(2);
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  out << metrics_json(report) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace pidcount
