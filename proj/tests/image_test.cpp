#include <fstream>

#include <gtest/gtest.h>

#include "pseg/errors.hpp"
#include "pseg/image.hpp"
#include "support.hpp"

namespace pseg {
namespace {

TEST(Image, PngRoundTrip) {
  testing::TempDir dir;
  Image img(5, 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_png_rgb(dir.path() / "a.png", img);
  EXPECT_EQ(read_png_rgb(dir.path() / "a.png"), img);
}

TEST(Image, MaskPngIsZeroOr255AndThresholdsAt128) {
  testing::TempDir dir;
  Rng rng(2);
  const Mask m = testing::random_mask(rng, 7, 4);
  write_png_mask(dir.path() / "m.png", m);
  EXPECT_EQ(read_png_mask(dir.path() / "m.png"), m);
  Image gray(2, 1);
  gray.rgb = {127, 127, 127, 128, 128, 128};
  write_png_rgb(dir.path() / "g.png", gray);
  const Mask g = read_png_mask(dir.path() / "g.png");
  EXPECT_EQ(g.at(0, 0), 0);
  EXPECT_EQ(g.at(1, 0), 1);
}

TEST(Image, ReadErrorsAreIoErrors) {
  testing::TempDir dir;
  EXPECT_THROW(read_png_rgb(dir.path() / "none.png"), IoError);
  std::ofstream(dir.path() / "bad.png") << "not a png";
  EXPECT_THROW(read_png_rgb(dir.path() / "bad.png"), IoError);
}

TEST(Image, ContentHashSensitiveToPixelsAndExtents) {
  Image a(4, 4, 10), b(4, 4, 10), c(2, 8, 10);
  EXPECT_EQ(content_hash(a), content_hash(b));
  EXPECT_EQ(content_hash(a).size(), 16u);
  b.rgb[5] = 11;
  EXPECT_NE(content_hash(a), content_hash(b));
  EXPECT_NE(content_hash(a), content_hash(c));
}

TEST(Mask, CountAndShape) {
  const Mask m = testing::rect_mask(6, 4, 1, 1, 3, 4);
  EXPECT_EQ(m.count(), 6u);
  EXPECT_FALSE(m.empty());
  EXPECT_TRUE(m.same_shape(Mask(6, 4)));
  EXPECT_THROW(Mask(0, 3), ArgumentError);
}

}  // namespace
}  // namespace pseg
