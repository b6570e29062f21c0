#include "pseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>

#include "pseg/bundle.hpp"
#include "pseg/errors.hpp"

namespace pseg {

Image::Image(int w, int h, std::uint8_t fill)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {
  if (w <= 0 || h <= 0) throw ArgumentError("image extents must be positive");
}

Mask::Mask(int w, int h, std::uint8_t fill)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {
  if (w <= 0 || h <= 0) throw ArgumentError("mask extents must be positive");
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

std::string content_hash(const Image& image) {
  const std::uint32_t ext[2] = {static_cast<std::uint32_t>(image.width),
                                static_cast<std::uint32_t>(image.height)};
  std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(ext), sizeof(ext)});
  h = fnv1a64(image.rgb, h);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decodes to 8-bit with the requested channel count (1 = gray, 3 = RGB).
std::vector<std::uint8_t> decode_png(const std::filesystem::path& path, int channels, int& width,
                                     int& height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng allocation failed");
  }
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  const bool src_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (channels == 3 && src_gray) png_set_gray_to_rgb(png);
  if (channels == 1 && !src_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const auto rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(width) * channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected PNG layout: " + path.string());
  }
  pixels.resize(rowbytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

void encode_png(const std::filesystem::path& path, const std::uint8_t* data, int width, int height,
                int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng allocation failed");
  }
  std::vector<png_const_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    rows[y] = data + static_cast<std::size_t>(y) * width * channels;
  }
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  Image img;
  img.rgb = decode_png(path, 3, img.width, img.height);
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const Image& image) {
  encode_png(path, image.rgb.data(), image.width, image.height, 3);
}

Mask read_png_mask(const std::filesystem::path& path) {
  Mask m;
  m.bits = decode_png(path, 1, m.width, m.height);
  for (auto& b : m.bits) b = b >= 128 ? 1 : 0;
  return m;
}

void write_png_mask(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), bytes.begin(),
                 [](auto b) { return b ? std::uint8_t{255} : std::uint8_t{0}; });
  encode_png(path, bytes.data(), mask.width, mask.height, 1);
}

}  // namespace pseg
