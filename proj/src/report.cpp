#include "pidcount/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pidcount/errors.hpp"

namespace pidcount {

namespace {

// 5x7 glyphs, one byte per row, low five bits used
const std::map<char, std::array<std::uint8_t, 7>>& font() {
  static const std::map<char, std::array<std::uint8_t, 7>> glyphs = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},               {'-', {0, 0, 0, 0x1F, 0, 0, 0}},
      {'+', {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0}},      {'e', {0, 0, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
      {'p', {0, 0, 0x1E, 0x11, 0x1E, 0x10, 0x10}},      {'o', {0, 0, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
      {'c', {0, 0, 0x0E, 0x10, 0x10, 0x11, 0x0E}},      {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'s', {0, 0, 0x0E, 0x10, 0x0E, 0x01, 0x1E}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}}, {'r', {0, 0, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'a', {0, 0, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},      {'i', {0x04, 0, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
      {'n', {0, 0, 0x16, 0x19, 0x11, 0x11, 0x11}},      {'v', {0, 0, 0x11, 0x11, 0x11, 0x0A, 0x04}},
  };
  return glyphs;
}

class Canvas {
 public:
  Canvas(int w, int h) : img_(h, w, 3) { std::fill(img_.data.begin(), img_.data.end(), 1.0f); }

  void put(int x, int y, const std::array<float, 3>& c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    for (int k = 0; k < 3; ++k) img_.at(y, x, k) = c[k];
  }

  void line(int x0, int y0, int x1, int y1, const std::array<float, 3>& c, int thickness = 1) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      for (int t = 0; t < thickness; ++t) {
        put(x0, y0 + t, c);
        put(x0 + t, y0, c);
      }
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  /// Text with its top-left corner at (x, y); unknown characters render blank.
  void text(int x, int y, const std::string& s, const std::array<float, 3>& c) {
    for (char ch : s) {
      if (auto it = font().find(ch); it != font().end()) {
        for (int row = 0; row < 7; ++row) {
          for (int col = 0; col < 5; ++col) {
            if (it->second[row] & (0x10 >> col)) put(x + col, y + row, c);
          }
        }
      }
      x += 6;
    }
  }

  Image take() { return std::move(img_); }

 private:
  Image img_;
};

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

Image line_chart(const std::vector<Series>& series, const std::string& y_label, double y_min, double y_max,
                 int width, int height) {
  constexpr int left = 64, right = 96, top = 24, bottom = 44;
  const std::array<float, 3> black{0, 0, 0}, grey{0.85f, 0.85f, 0.85f};
  Canvas cv(width, height);
  std::size_t epochs = 0;
  for (const auto& s : series) epochs = std::max(epochs, s.values.size());
  if (y_min == y_max) {
    y_min = INFINITY;
    y_max = -INFINITY;
    for (const auto& s : series) {
      for (double v : s.values) {
        if (!std::isfinite(v)) continue;
        y_min = std::min(y_min, v);
        y_max = std::max(y_max, v);
      }
    }
    if (!std::isfinite(y_min)) y_min = 0, y_max = 1;
    const double pad = y_max > y_min ? 0.05 * (y_max - y_min) : 0.5;
    y_min -= pad;
    y_max += pad;
  }
  const int pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double epoch) {
    return left + static_cast<int>(std::lround(epochs > 1 ? (epoch - 1) * pw / static_cast<double>(epochs - 1) : pw / 2.0));
  };
  auto py = [&](double v) { return top + static_cast<int>(std::lround((y_max - v) * ph / (y_max - y_min))); };

  for (int i = 0; i <= 4; ++i) {
    const double v = y_min + (y_max - y_min) * i / 4.0;
    const int y = py(v);
    cv.line(left, y, left + pw, y, grey);
    const std::string label = tick_label(v);
    cv.text(left - 6 - 6 * static_cast<int>(label.size()), y - 3, label, black);
  }
  const std::size_t step = std::max<std::size_t>(1, (epochs + 9) / 10);
  for (std::size_t e = 1; e <= epochs; e += step) {
    const int x = px(static_cast<double>(e));
    cv.line(x, top + ph, x, top + ph + 4, black);
    const std::string label = std::to_string(e);
    cv.text(x - 3 * static_cast<int>(label.size()), top + ph + 8, label, black);
  }
  cv.line(left, top, left, top + ph, black);
  cv.line(left, top + ph, left + pw, top + ph, black);
  cv.text(left + pw / 2 - 15, height - 14, "epoch", black);
  cv.text(8, 8, y_label, black);

  int legend_y = top + 4;
  for (const auto& s : series) {
    for (std::size_t e = 1; e < s.values.size(); ++e) {
      if (!std::isfinite(s.values[e - 1]) || !std::isfinite(s.values[e])) continue;
      cv.line(px(static_cast<double>(e)), py(s.values[e - 1]), px(static_cast<double>(e + 1)), py(s.values[e]), s.color, 2);
    }
    if (s.values.size() == 1 && std::isfinite(s.values[0])) cv.line(px(1) - 2, py(s.values[0]), px(1) + 2, py(s.values[0]), s.color, 2);
    cv.line(left + pw + 12, legend_y + 3, left + pw + 30, legend_y + 3, s.color, 2);
    cv.text(left + pw + 36, legend_y, s.name, black);
    legend_y += 14;
  }
  return cv.take();
}

void write_curve_plots(const std::filesystem::path& directory, const TrainingCurves& c) {
  std::filesystem::create_directories(directory);
  const std::array<float, 3> blue{0.12f, 0.35f, 0.75f}, orange{0.95f, 0.5f, 0.1f};
  write_png(directory / "loss.png", line_chart({{"train", c.train_loss, blue}, {"val", c.val_loss, orange}}, "loss"));
  write_png(directory / "iou.png", line_chart({{"train", c.train_iou, blue}, {"val", c.val_iou, orange}}, "IoU", 0.0, 1.0));
}

TrainingCurves read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read " + path.string());
  TrainingCurves c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> v;
    while (std::getline(ss, field, ',')) {
      try {
        v.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw LoadError(path.string() + " line " + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    if (v.size() != 5) throw LoadError(path.string() + " line " + std::to_string(lineno) + ": expected 5 columns");
    c.train_loss.push_back(v[1]);
    c.train_iou.push_back(v[2]);
    c.val_loss.push_back(v[3]);
    c.val_iou.push_back(v[4]);
    if (c.best_epoch < 0 || v[4] > c.val_iou[c.best_epoch]) c.best_epoch = static_cast<int>(c.val_iou.size()) - 1;
  }
  return c;
}

Image overlay(const Image& image, const Mask& pred, const Mask& gt) {
  if (image.height != gt.height || image.width != gt.width || !pred.same_shape(gt)) {
    throw DimensionError("overlay: image and masks differ in size");
  }
  Image out(image.height, image.width, 3);
  const std::array<float, 3> tp{0.1f, 0.85f, 0.2f}, fp{0.95f, 0.15f, 0.15f}, fn{0.15f, 0.35f, 1.0f};
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      float g = 0.0f;
      for (int c = 0; c < image.channels; ++c) g += image.at(y, x, c);
      g /= static_cast<float>(image.channels);
      const bool p = pred.at(y, x), t = gt.at(y, x);
      const std::array<float, 3>* hue = p && t ? &tp : p ? &fp : t ? &fn : nullptr;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = hue ? 0.4f * g + 0.6f * (*hue)[c] : g;
    }
  }
  return out;
}

}  // namespace pidcount
