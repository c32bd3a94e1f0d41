#pragma once

// Raster containers and PNG IO.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pidcount {

/// Row-major, channel-interleaved floats in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0f) {}

  float& at(int y, int x, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
};

/// Binary raster, values 0 or 1.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
  std::size_t area() const;
  bool same_shape(const Mask& other) const { return height == other.height && width == other.width; }
  bool operator==(const Mask&) const = default;
};

/// Reads 8- or 16-bit grayscale / RGB PNG files (alpha is dropped).
/// Throws LoadError.
Image read_png(const std::filesystem::path& path);
/// Foreground where the gray level (channel mean for color files) is >= 128 of 255.
Mask read_mask_png(const std::filesystem::path& path);

void write_png_gray8(const std::filesystem::path& path, int height, int width, const std::uint8_t* pixels);
void write_png_rgb8(const std::filesystem::path& path, int height, int width, const std::uint8_t* pixels);
void write_png_gray16(const std::filesystem::path& path, int height, int width, const std::uint16_t* pixels);

/// Gray images are written as 8-bit gray, three-channel images as RGB.
void write_png(const std::filesystem::path& path, const Image& image);
/// Writes 0 / 255.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

bool is_png_path(const std::filesystem::path& path);

}  // namespace pidcount
