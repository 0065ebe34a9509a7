#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uvtrack/types.hpp"

namespace uvtrack {

// 8-bit interleaved RGB raster.
struct ImageRgb {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // size = 3 * width * height

  ImageRgb() = default;
  ImageRgb(int w, int h) : width(w), height(h), pixels(3u * w * h, 0) {}

  std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (y * width + x); }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (y * width + x);
  }
};

// Planar HSV raster; hue on the 0-180 scale, saturation and value in [0, 1].
struct ImageHsv {
  int width = 0;
  int height = 0;
  std::vector<float> hue;
  std::vector<float> saturation;
  std::vector<float> value;

  ImageHsv() = default;
  ImageHsv(int w, int h)
      : width(w), height(h),
        hue(static_cast<std::size_t>(w) * h, 0.f),
        saturation(static_cast<std::size_t>(w) * h, 0.f),
        value(static_cast<std::size_t>(w) * h, 0.f) {}

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
};

struct Hsv {
  double h;  // 0-180
  double s;  // 0-1
  double v;  // 0-1
};

// Standard hexcone HSV with the hue scale halved to 0-180.
Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
void hsv_to_rgb(double h, double s, double v,
                std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

ImageHsv to_hsv(const ImageRgb& image);

// PNG and PPM (P6/P3) readers/writers; format chosen by file extension.
ImageRgb load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const ImageRgb& image);

}  // namespace uvtrack
