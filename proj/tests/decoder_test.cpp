#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "pseg/decoder.hpp"
#include "pseg/errors.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace pseg {
namespace {

using testing::random_features;
using testing::random_tensor;
using testing::small_decoder_config;

using testing::oracle_softmax;

Tensor row_stochastic(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor a({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> r(cols);
    for (double& v : r) v = rng.normal() * 2.0;
    const auto p = oracle_softmax(r);
    for (std::size_t j = 0; j < cols; ++j) a.at(i, j) = static_cast<float>(p[j]);
  }
  return a;
}

AttentionBias bias_of(float alpha, const Tensor& s_flat) {
  AttentionBias b;
  b.alpha = alpha;
  b.s_flat = s_flat;
  b.h = 1;
  b.w = static_cast<int>(s_flat.size());
  return b;
}

TEST(GuidedAttention, MatchesOracleAndRowsSumToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t rows = rng.uniform_int(1, 6), cols = rng.uniform_int(2, 64);
    const Tensor a = row_stochastic(rng, rows, cols);
    const float alpha = static_cast<float>(rng.uniform(0.0, 3.0));
    std::vector<double> s(cols);
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    const auto s_soft = oracle_softmax(s);
    Tensor s_flat({cols});
    for (std::size_t j = 0; j < cols; ++j) s_flat[j] = static_cast<float>(s_soft[j]);
    const Tensor g = guided_cross_attention(a, bias_of(alpha, s_flat));
    for (std::size_t i = 0; i < rows; ++i) {
      std::vector<double> pre(cols);
      for (std::size_t j = 0; j < cols; ++j) pre[j] = a.at(i, j) + alpha * s_soft[j];
      const auto want = oracle_softmax(pre);
      double sum = 0;
      for (std::size_t j = 0; j < cols; ++j) {
        EXPECT_NEAR(g.at(i, j), want[j], 1e-6);
        sum += g.at(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(GuidedAttention, FromConfidenceSoftmaxesTheMap) {
  const AttentionBias b = AttentionBias::from_confidence(1.0f, Tensor({1, 2}, {0.0f, 1.0f}), 1, 2);
  const double e = std::exp(1.0);
  EXPECT_NEAR(b.s_flat[0], 1.0 / (1.0 + e), 1e-6);
  EXPECT_NEAR(b.s_flat[1], e / (1.0 + e), 1e-6);
  EXPECT_THROW(AttentionBias::from_confidence(-1.0f, Tensor({1, 2}), 1, 2), ArgumentError);
}

TEST(GuidedAttention, OneHotBiasRaisesItsColumnToRowMax) {
  Rng rng(7);
  const Tensor a = row_stochastic(rng, 3, 10);
  Tensor s({10});
  s[4] = 1.0f;
  const Tensor g = guided_cross_attention(a, bias_of(20.0f, s));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 10; ++j)
      if (j != 4) EXPECT_GT(g.at(i, 4), g.at(i, j));
  }
}

TEST(GuidedAttention, AlphaZeroIsSoftmaxOfAttention) {
  Rng rng(8);
  const Tensor a = row_stochastic(rng, 4, 16);
  Tensor s({16}, 1.0f / 16);
  const Tensor g = guided_cross_attention(a, bias_of(0.0f, s));
  const Tensor want = softmax(a, 1);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], want[i], 1e-7);
  EXPECT_FALSE(bias_of(0.0f, s).active());
}

TEST(GuidedAttention, UniformBiasPreservesOrdering) {
  Rng rng(9);
  const Tensor a = row_stochastic(rng, 2, 12);
  const Tensor g = guided_cross_attention(a, bias_of(1.5f, Tensor({12}, 1.0f / 12)));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 12; ++j)
      for (std::size_t k = 0; k < 12; ++k)
        if (a.at(i, j) > a.at(i, k)) EXPECT_GE(g.at(i, j), g.at(i, k));
}

TEST(GuidedAttention, LengthMismatchIsArgumentError) {
  Rng rng(10);
  EXPECT_THROW(guided_cross_attention(row_stochastic(rng, 2, 8), bias_of(1.0f, Tensor({7}))),
               ArgumentError);
}

TEST(SemanticTokens, AddsTargetToEveryRow) {
  const MaskTokens tm{Tensor({3, 2}, {1, 0, 0, 1, 1, 1})};
  const PromptTokens tp{Tensor({2, 2}, {0, 0, 2, 2}), {PromptKind::kPositive, PromptKind::kNegative}};
  const Tensor t = semantic_prompt_tokens(Tensor({2}, {0.5f, -0.5f}), tm, tp);
  const std::vector<float> want = {1.5f, -0.5f, 0.5f, 0.5f, 1.5f, 0.5f, 0.5f, -0.5f, 2.5f, 1.5f};
  ASSERT_EQ(t.dims(), (Shape{5, 2}));
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_FLOAT_EQ(t[i], want[i]);

  const Tensor zero = semantic_prompt_tokens(Tensor({2}), tm, tp);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(zero[i], tm.tokens[i]);
  EXPECT_THROW(semantic_prompt_tokens(Tensor({3}), tm, tp), ArgumentError);
}

class DecoderFixture : public ::testing::Test {
 protected:
  DecoderConfig cfg = small_decoder_config();
  std::shared_ptr<const TensorBundle> weights =
      std::make_shared<TensorBundle>(random_decoder_weights(cfg, 42));
  MaskDecoder decoder{cfg, weights};
};

TEST_F(DecoderFixture, PromptTokensArePositionalPlusKind) {
  const PromptEncoder& pe = decoder.prompt_encoder();
  LocationPrior p;
  p.positive = {16.0f, 16.0f};
  p.negative = {4.0f, 28.0f};
  const PromptTokens t = pe.encode_prompts(p, std::nullopt, 32, 32);
  ASSERT_EQ(t.tokens.dims(), (Shape{2, 16}));
  const Tensor centre = pe.positional_encoding(0.5f, 0.5f);
  const Tensor& kinds = weights->get("dec.prompt.kind_embed");
  for (std::size_t j = 0; j < 16; ++j) EXPECT_FLOAT_EQ(t.tokens.at(0, j), centre[j] + kinds.at(0, j));
  // At the centre the phase is zero: sin = 0, cos = 1.
  for (std::size_t j = 0; j < 8; ++j) EXPECT_FLOAT_EQ(centre[j], 0.0f);
  for (std::size_t j = 8; j < 16; ++j) EXPECT_FLOAT_EQ(centre[j], 1.0f);

  LocationPrior same;
  same.positive = same.negative = {16.0f, 16.0f};
  const PromptTokens s = pe.encode_prompts(same, std::nullopt, 32, 32);
  for (std::size_t j = 0; j < 16; ++j)
    EXPECT_NEAR(s.tokens.at(0, j) - s.tokens.at(1, j), kinds.at(0, j) - kinds.at(1, j), 1e-6);
}

TEST_F(DecoderFixture, BoxAddsCornerTokensAndBoundsAreChecked) {
  const PromptEncoder& pe = decoder.prompt_encoder();
  LocationPrior p;
  p.positive = {8.0f, 8.0f};
  p.negative = {24.0f, 24.0f};
  const PromptTokens t = pe.encode_prompts(p, Box{2, 3, 20, 21}, 32, 32);
  ASSERT_EQ(t.tokens.dim(0), 4u);
  EXPECT_EQ(t.kinds[2], PromptKind::kBoxTopLeft);
  EXPECT_EQ(t.kinds[3], PromptKind::kBoxBottomRight);
  p.positive = {40.0f, 8.0f};
  EXPECT_THROW(pe.encode_prompts(p, std::nullopt, 32, 32), ArgumentError);
}

TEST_F(DecoderFixture, GoldenPromptChecksum) {
  LocationPrior p;
  p.positive = {12.0f, 20.0f};
  p.negative = {28.0f, 4.0f};
  const PromptTokens t = decoder.prompt_encoder().encode_prompts(p, Box{1, 2, 30, 29}, 32, 32);
  EXPECT_EQ(testing::tensor_checksum(t.tokens), 7291415158774652453ULL);
}

Tensor tokens_for(const MaskDecoder& d, const Tensor& target, int size) {
  LocationPrior p;
  p.positive = {size * 0.25f, size * 0.25f};
  p.negative = {size * 0.75f, size * 0.75f};
  return semantic_prompt_tokens(target, d.prompt_encoder().mask_tokens(),
                                d.prompt_encoder().encode_prompts(p, std::nullopt, size, size));
}

TEST_F(DecoderFixture, OutputShapesAndGolden) {
  Rng rng(11);
  const FeatureMap f = random_features(rng, 4, 4, 16);
  const Tensor tokens = tokens_for(decoder, random_tensor(rng, {16}, 0.1), 32);
  const MaskLogits out = decoder.decode(f, tokens, nullptr, nullptr);
  EXPECT_EQ(out.low_res.dims(), (Shape{3, 16, 16}));
  EXPECT_EQ(out.scales.dims(), (Shape{3, 32, 32}));
  EXPECT_TRUE(out.scales.all_finite());
  EXPECT_EQ(testing::tensor_checksum(out.scales), 4275885147835033036ULL);

  const Tensor prompt({4, 4, 1}, 0.5f);
  const MaskLogits with_mask = decoder.decode(f, tokens, nullptr, &prompt);
  EXPECT_EQ(with_mask.scales.dims(), (Shape{3, 32, 32}));
  EXPECT_FALSE(bitwise_equal(with_mask.scales, out.scales));
  const Tensor bad({3, 4, 1});
  EXPECT_THROW(decoder.decode(f, tokens, nullptr, &bad), ArgumentError);
}

TEST_F(DecoderFixture, FourPromptTokensAlsoDecode) {
  Rng rng(12);
  const FeatureMap f = random_features(rng, 4, 4, 16);
  LocationPrior p;
  p.positive = {8.0f, 8.0f};
  p.negative = {24.0f, 24.0f};
  const PromptEncoder& pe = decoder.prompt_encoder();
  const Tensor tokens = semantic_prompt_tokens(Tensor({16}), pe.mask_tokens(),
                                               pe.encode_prompts(p, Box{0, 0, 15, 15}, 32, 32));
  EXPECT_EQ(tokens.dim(0), 7u);
  EXPECT_TRUE(decoder.decode(f, tokens, nullptr, nullptr).scales.all_finite());
}

TEST_F(DecoderFixture, AlphaZeroMatchesUnguidedBitwise) {
  Rng rng(13);
  const FeatureMap f = random_features(rng, 4, 4, 16);
  const Tensor tokens = tokens_for(decoder, Tensor({16}), 32);
  const AttentionBias off = AttentionBias::from_confidence(0.0f, random_tensor(rng, {4, 4}), 4, 4);
  EXPECT_TRUE(bitwise_equal(decoder.decode(f, tokens, &off, nullptr).scales,
                            decoder.decode(f, tokens, nullptr, nullptr).scales));
  const AttentionBias on = AttentionBias::from_confidence(1.0f, random_tensor(rng, {4, 4}), 4, 4);
  EXPECT_FALSE(bitwise_equal(decoder.decode(f, tokens, &on, nullptr).scales,
                             decoder.decode(f, tokens, nullptr, nullptr).scales));
}

TEST_F(DecoderFixture, ObserverSeesRowStochasticGuidedMaps) {
  Rng rng(14);
  const FeatureMap f = random_features(rng, 4, 4, 16);
  const Tensor tokens = tokens_for(decoder, Tensor({16}), 32);
  const AttentionBias bias = AttentionBias::from_confidence(1.0f, random_tensor(rng, {4, 4}), 4, 4);
  std::map<std::string, int> seen;
  decoder.decode(f, tokens, &bias, nullptr, [&](std::string_view layer, const Tensor& rows) {
    ++seen[std::string(layer)];
    for (std::size_t i = 0; i < rows.dim(0); ++i) {
      double s = 0;
      for (float v : rows.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-5) << layer;
    }
  });
  // One map per head.
  EXPECT_EQ(seen["dec.block0.cross_token_to_image."], 2);
  EXPECT_EQ(seen["dec.block1.cross_token_to_image."], 2);
  EXPECT_EQ(seen["dec.final_attn."], 2);
}

TEST(Decoder, ZeroWeightsGiveConstantLogits) {
  const DecoderConfig cfg = small_decoder_config();
  const TensorBundle src = random_decoder_weights(cfg, 1);
  TensorBundle z;
  for (const auto& e : src.entries()) z.add(e.name, Tensor(e.tensor.dims()));
  const MaskDecoder d(cfg, std::make_shared<TensorBundle>(z));
  Rng rng(15);
  const MaskLogits out = d.decode(random_features(rng, 4, 4, 16), tokens_for(d, Tensor({16}), 32),
                                  nullptr, nullptr);
  for (float v : out.scales.data()) EXPECT_EQ(v, out.scales[0]);
}

TEST(Decoder, BadWeightShapeIsConfigError) {
  const DecoderConfig cfg = small_decoder_config();
  TensorBundle b = random_decoder_weights(cfg, 1);
  b.set("dec.final_attn.q_proj.weight", Tensor({3, 3}));
  EXPECT_THROW(MaskDecoder(cfg, std::make_shared<TensorBundle>(b)), ConfigError);
  b = random_decoder_weights(cfg, 1);
  b.erase("dec.hyper2.fc2.bias");
  EXPECT_THROW(MaskDecoder(cfg, std::make_shared<TensorBundle>(b)), ConfigError);
}

}  // namespace
}  // namespace pseg
