#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pseg {

/// 8-bit interleaved RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);

  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary raster, one byte per pixel holding 0 or 1.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool same_shape(const Mask& o) const { return width == o.width && height == o.height; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Hex-encoded 64-bit FNV-1a over the extents and pixel bytes.
std::string content_hash(const Image& image);

/// Reads any 8-bit or 16-bit PNG and converts it to RGB (alpha dropped).
Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Image& image);

/// Reads a single-channel mask; foreground is any value >= 128.
Mask read_png_mask(const std::filesystem::path& path);
/// Writes 0 for background and 255 for foreground.
void write_png_mask(const std::filesystem::path& path, const Mask& mask);

}  // namespace pseg
