#include "uvtrack/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <png.h>

namespace uvtrack {

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  double h_deg = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h_deg = 60.0 * ((g - b) / delta);
    } else if (mx == g) {
      h_deg = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h_deg = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h_deg < 0.0) h_deg += 360.0;
  }
  out.h = 0.5 * h_deg;  // 0-180 scale
  return out;
}

void hsv_to_rgb(double h, double s, double v,
                std::uint8_t& r8, std::uint8_t& g8, std::uint8_t& b8) {
  const double h_deg = std::clamp(h, 0.0, 180.0) * 2.0;
  s = std::clamp(s, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  const double c = v * s;
  const double hp = h_deg / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)      { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else             { r = c; b = x; }
  const double m = v - c;
  auto q = [](double u) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0));
  };
  r8 = q(r + m);
  g8 = q(g + m);
  b8 = q(b + m);
}

ImageHsv to_hsv(const ImageRgb& image) {
  ImageHsv out(image.width, image.height);
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = image.pixels.data() + 3 * i;
    const Hsv hsv = rgb_to_hsv(px[0], px[1], px[2]);
    out.hue[i] = static_cast<float>(hsv.h);
    out.saturation[i] = static_cast<float>(hsv.s);
    out.value[i] = static_cast<float>(hsv.v);
  }
  return out;
}

namespace {

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return e == ext;
}

ImageRgb load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open image " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P3") {
    fail(ErrorCode::ParseError, path.string() + ": not a P3/P6 PPM file");
  }
  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    fail(ErrorCode::ParseError, path.string() + ": truncated PPM header");
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval != 255) {
    fail(ErrorCode::ParseError, path.string() + ": unsupported PPM geometry (need maxval 255)");
  }
  ImageRgb image(w, h);
  if (magic == "P6") {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
      fail(ErrorCode::ParseError, path.string() + ": truncated PPM data");
    }
  } else {
    for (auto& byte : image.pixels) {
      int v;
      if (!(in >> v)) fail(ErrorCode::ParseError, path.string() + ": truncated PPM data");
      byte = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }
  return image;
}

void save_ppm(const std::filesystem::path& path, const ImageRgb& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write image " + path.string());
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

ImageRgb load_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) fail(ErrorCode::IoError, "cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    fail(ErrorCode::ParseError, path.string() + ": PNG decode failed");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // normalize everything to 8-bit RGB
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  ImageRgb image(w, h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = image.at(0, y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return image;
}

void save_png(const std::filesystem::path& path, const ImageRgb& image) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) fail(ErrorCode::IoError, "cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    fail(ErrorCode::IoError, path.string() + ": PNG encode failed");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.at(0, y));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

ImageRgb load_image(const std::filesystem::path& path) {
  if (has_extension(path, ".png")) return load_png(path);
  if (has_extension(path, ".ppm")) return load_ppm(path);
  fail(ErrorCode::InvalidArgument, "unsupported image extension: " + path.string());
}

void save_image(const std::filesystem::path& path, const ImageRgb& image) {
  if (has_extension(path, ".png")) return save_png(path, image);
  if (has_extension(path, ".ppm")) return save_ppm(path, image);
  fail(ErrorCode::InvalidArgument, "unsupported image extension: " + path.string());
}

}  // namespace uvtrack
