#include <gtest/gtest.h>

#include "pseg/encoder.hpp"
#include "pseg/errors.hpp"
#include "pseg/synthetic.hpp"
#include "support.hpp"

namespace pseg {
namespace {

EncoderConfig config64() {
  EncoderConfig c;
  c.resolution = 64;
  return c;
}

Image pattern_image(int size) {
  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      auto* p = img.pixel(x, y);
      p[0] = static_cast<std::uint8_t>(4 * x);
      p[1] = static_cast<std::uint8_t>(4 * y);
      p[2] = static_cast<std::uint8_t>((x * y) % 256);
    }
  }
  return img;
}

TensorBundle zero_weights(const EncoderConfig& cfg) {
  TensorBundle b = synthetic_encoder_weights(cfg, 1);
  TensorBundle z;
  for (const auto& e : b.entries()) z.add(e.name, Tensor(e.tensor.dims()));
  return z;
}

TEST(Encoder, ZeroWeightsGiveIdenticalFeatures) {
  const EncoderConfig cfg = config64();
  const ImageEncoder enc(cfg, std::make_shared<TensorBundle>(zero_weights(cfg)));
  const FeatureMap f = enc.encode(pattern_image(64));
  ASSERT_EQ(f.grid.dims(), (Shape{8, 8, 64}));
  for (std::size_t cell = 1; cell < 64; ++cell) {
    for (std::size_t k = 0; k < 64; ++k) ASSERT_EQ(f.grid[cell * 64 + k], f.grid[k]);
  }
}

TEST(Encoder, GoldenFeatureChecksumSeed1234) {
  const EncoderConfig cfg = config64();
  const ImageEncoder enc(cfg, std::make_shared<TensorBundle>(synthetic_encoder_weights(cfg, 1234)));
  const FeatureMap f = enc.encode(pattern_image(64));
  EXPECT_TRUE(f.grid.all_finite());
  EXPECT_EQ(f.stride, 8);
  EXPECT_EQ(f.image_h, 64);
  EXPECT_EQ(testing::tensor_checksum(f.grid), 10344844442397307141ULL);
}

TEST(Encoder, DeterministicAcrossInstances) {
  const EncoderConfig cfg = config64();
  const auto w = std::make_shared<TensorBundle>(synthetic_encoder_weights(cfg, 5));
  const ImageEncoder a(cfg, w), b(cfg, std::make_shared<TensorBundle>(*w));
  EXPECT_TRUE(bitwise_equal(a.encode(pattern_image(64)).grid, b.encode(pattern_image(64)).grid));
}

TEST(Encoder, ResolutionMismatchIsArgumentError) {
  const EncoderConfig cfg = config64();
  const ImageEncoder enc(cfg, std::make_shared<TensorBundle>(synthetic_encoder_weights(cfg, 1)));
  EXPECT_THROW(enc.encode(pattern_image(32)), ArgumentError);
}

TEST(Encoder, MissingOrMisshapenWeights) {
  const EncoderConfig cfg = config64();
  TensorBundle b = synthetic_encoder_weights(cfg, 1);
  b.erase("enc.norm.bias");
  EXPECT_THROW(ImageEncoder(cfg, std::make_shared<TensorBundle>(b)), LookupError);
  b.add("enc.norm.bias", Tensor({3}));
  EXPECT_THROW(ImageEncoder(cfg, std::make_shared<TensorBundle>(b)), ConfigError);
}

TEST(Encoder, PrecomputedLookupIsVerbatim) {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kPrecomputed;
  cfg.embed_dim = 8;
  cfg.stride = 8;
  const Image img = pattern_image(32);
  Rng rng(3);
  const Tensor grid = testing::random_tensor(rng, {4, 4, 8});
  auto b = std::make_shared<TensorBundle>();
  b->add(precomputed_feature_key(img), grid);
  const ImageEncoder enc(cfg, b);
  const FeatureMap f = enc.encode(img);
  EXPECT_TRUE(bitwise_equal(f.grid, grid));
  EXPECT_EQ(f.image_w, 32);
  EXPECT_THROW(enc.encode(pattern_image(48)), LookupError);
}

TEST(Encoder, PrecomputedGridMustCoverImage) {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kPrecomputed;
  cfg.embed_dim = 8;
  const Image img = pattern_image(32);
  auto b = std::make_shared<TensorBundle>();
  b->add(precomputed_feature_key(img), Tensor({3, 4, 8}));
  EXPECT_THROW(ImageEncoder(cfg, b).encode(img), ArgumentError);
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig c;
  c.resolution = 100;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = EncoderConfig{};
  c.heads = 3;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(DownsampleMask, FullAndQuadrant) {
  const Tensor full = downsample_mask(Mask(64, 64, 1), 4, 4);
  for (float v : full.data()) EXPECT_EQ(v, 1.0f);
  const Tensor q = downsample_mask(testing::rect_mask(64, 64, 0, 0, 32, 32), 4, 4);
  ASSERT_EQ(q.dims(), (Shape{4, 4, 1}));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(q[r * 4 + c], (r < 2 && c < 2) ? 1.0f : 0.0f);
}

TEST(DownsampleMask, EmptyStaysEmptyAndTinyObjectIsDegenerate) {
  const Tensor e = downsample_mask(Mask(64, 64), 4, 4);
  for (float v : e.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(downsample_mask(testing::rect_mask(64, 64, 3, 3, 5, 5), 4, 4), DegenerateMaskError);
}

TEST(DownsampleMask, AgreesWithAreaFractionOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const double cx = rng.uniform(16, 48), cy = rng.uniform(16, 48);
    const double rx = rng.uniform(8, 20), ry = rng.uniform(8, 20);
    Mask m(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        m.at(x, y) = dx * dx + dy * dy <= 1.0;
      }
    const Tensor d = downsample_mask(m, 4, 4);
    int disagreements = 0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        int on = 0;
        for (int y = r * 16; y < r * 16 + 16; ++y)
          for (int x = c * 16; x < c * 16 + 16; ++x) on += m.at(x, y);
        disagreements += (on > 128) != (d[r * 4 + c] > 0.5f);
      }
    EXPECT_LE(disagreements, 1) << "seed " << seed;
  }
}

}  // namespace
}  // namespace pseg
