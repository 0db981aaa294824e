#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"

namespace posefeat {

/// Row-major 2-D raster; pixel (u, v) is column u, row v.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const noexcept { return data.empty(); }
  T& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  bool contains(int u, int v) const noexcept { return u >= 0 && v >= 0 && u < width && v < height; }
};

/// Depth in stored sensor units (scaled to mm by CameraIntrinsics::depth_scale).
using DepthImage = Image<double>;
/// RGB in [0, 1].
using ColorImage = Image<Vec3>;

namespace png_detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
  int width = 0, height = 0, channels = 0, bit_depth = 0;
  std::vector<std::uint16_t> samples;  // row-major, channel-interleaved
};

inline Decoded decode(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw DataError("cannot open PNG file " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ParseError(ParseError::Kind::kMalformedHeader, path.string() + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng: cannot allocate info struct");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(ParseError::Kind::kTruncated, path.string() + ": corrupt PNG payload");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * out.height);
  rows.resize(out.height);
  for (int r = 0; r < out.height; ++r) rows[r] = buffer.data() + r * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

inline void encode(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
                   const std::vector<std::uint16_t>& samples) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw DataError("cannot write PNG file " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng: cannot allocate write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng: cannot allocate info struct");
  }
  const int bytes = bit_depth / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * bytes;
  std::vector<png_byte> buffer(row_bytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bytes == 2) {
      buffer[2 * i] = static_cast<png_byte>(samples[i] >> 8);  // PNG is big-endian on disk
      buffer[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xFF);
    } else {
      buffer[i] = static_cast<png_byte>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = buffer.data() + r * row_bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng: failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace png_detail

/// 16-bit (or 8-bit) single-channel PNG into stored depth units.
inline DepthImage read_depth_png(const std::filesystem::path& path) {
  const png_detail::Decoded d = png_detail::decode(path);
  if (d.channels != 1)
    throw ParseError(ParseError::Kind::kUnsupported, path.string() + ": depth PNG must be single-channel");
  DepthImage img(d.width, d.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = d.samples[i];
  return img;
}

/// 8-bit RGB (alpha dropped, grey expanded) PNG into [0, 1] colours.
inline ColorImage read_color_png(const std::filesystem::path& path) {
  const png_detail::Decoded d = png_detail::decode(path);
  const double scale = d.bit_depth == 16 ? 65535.0 : 255.0;
  ColorImage img(d.width, d.height);
  for (int i = 0; i < d.width * d.height; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * d.channels;
    if (d.channels >= 3) {
      img.data[i] = Vec3(d.samples[base], d.samples[base + 1], d.samples[base + 2]) / scale;
    } else {
      img.data[i] = Vec3::Constant(d.samples[base] / scale);
    }
  }
  return img;
}

inline void write_depth_png(const std::filesystem::path& path, const DepthImage& depth) {
  std::vector<std::uint16_t> s(depth.data.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = static_cast<std::uint16_t>(std::clamp(std::lround(depth.data[i]), 0L, 65535L));
  png_detail::encode(path, depth.width, depth.height, 1, 16, s);
}

inline void write_color_png(const std::filesystem::path& path, const ColorImage& rgb) {
  std::vector<std::uint16_t> s(rgb.data.size() * 3);
  for (std::size_t i = 0; i < rgb.data.size(); ++i)
    for (int k = 0; k < 3; ++k)
      s[3 * i + k] = static_cast<std::uint16_t>(std::lround(std::clamp(rgb.data[i](k), 0.0, 1.0) * 255.0));
  png_detail::encode(path, rgb.width, rgb.height, 3, 8, s);
}

}  // namespace posefeat
