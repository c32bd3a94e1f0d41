#include "pidcount/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <string>

#include "pidcount/errors.hpp"

namespace pidcount {

namespace fs = std::filesystem;

std::size_t Mask::area() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }

namespace {

struct PngReader {
  png_image image;
  PngReader() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngReader() { png_image_free(&image); }
};

void write_simplified(const fs::path& path, int height, int width, png_uint_32 format, const void* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels, 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw Error("cannot write " + path.string() + ": " + message);
  }
}

}  // namespace

bool is_png_path(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

Image read_png(const fs::path& path) {
  PngReader r;
  if (!png_image_begin_read_from_file(&r.image, path.c_str())) {
    throw LoadError("cannot read " + path.string() + ": " + r.image.message);
  }
  const bool color = (r.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool wide = (r.image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const int channels = color ? 3 : 1;
  const int h = static_cast<int>(r.image.height), w = static_cast<int>(r.image.width);
  Image out(h, w, channels);

  // label maps from write_png_gray16 carry a linear gamma, so their words
  // come back unchanged
  if (wide) {
    r.image.format = color ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_LINEAR_Y;
    std::vector<std::uint16_t> buf(PNG_IMAGE_SIZE(r.image) / 2);
    if (!png_image_finish_read(&r.image, nullptr, buf.data(), 0, nullptr)) {
      throw LoadError("cannot decode " + path.string() + ": " + r.image.message);
    }
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(buf[i]) / 65535.0f;
  } else {
    r.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(r.image));
    if (!png_image_finish_read(&r.image, nullptr, buf.data(), 0, nullptr)) {
      throw LoadError("cannot decode " + path.string() + ": " + r.image.message);
    }
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(buf[i]) / 255.0f;
  }
  return out;
}

Mask read_mask_png(const fs::path& path) {
  const Image img = read_png(path);
  Mask m(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float s = 0.0f;
      for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
      m.at(y, x) = std::lround(255.0f * s / static_cast<float>(img.channels)) >= 128 ? 1 : 0;
    }
  }
  return m;
}

void write_png_gray8(const fs::path& path, int height, int width, const std::uint8_t* pixels) {
  write_simplified(path, height, width, PNG_FORMAT_GRAY, pixels);
}

void write_png_rgb8(const fs::path& path, int height, int width, const std::uint8_t* pixels) {
  write_simplified(path, height, width, PNG_FORMAT_RGB, pixels);
}

void write_png_gray16(const fs::path& path, int height, int width, const std::uint16_t* pixels) {
  write_simplified(path, height, width, PNG_FORMAT_LINEAR_Y, pixels);
}

void write_png(const fs::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DimensionError("write_png: 1 or 3 channels required");
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0f, 1.0f) * 255.0f));
  }
  if (image.channels == 1) {
    write_png_gray8(path, image.height, image.width, bytes.data());
  } else {
    write_png_rgb8(path, image.height, image.width, bytes.data());
  }
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  write_png_gray8(path, mask.height, mask.width, bytes.data());
}

}  // namespace pidcount
