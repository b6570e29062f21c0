#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pseg/bundle.hpp"
#include "pseg/evalkit.hpp"
#include "pseg/model_config.hpp"

namespace pseg {

/// Seeded random tiny-vit weights. Patch embeddings respond mostly to mean
/// patch colour; blocks and positional embeddings are small perturbations.
TensorBundle synthetic_encoder_weights(const EncoderConfig& config, std::uint64_t seed);

/// Knobs of the hand-structured decoder used for desk-scale scenes.
struct DecoderSynthesis {
  float token_scale = 1.0f;  // mask tokens along the all-ones direction
  float token_noise = 0.05f;
  float qk_gain = 1.2f;      // token->image query/key projections
  float value_gain = 0.0f;   // token->image output projection
  float mask_gain = 5.0f;    // mask prompt along the all-ones direction
  float logit_gain = 0.25f;  // logit ~ logit_gain * c * cos(token, feature)
  float pe_scale = 0.1f;
  float small = 0.005f;      // std of the unstructured weights
  /// Cosine each scale needs before a pixel turns foreground: whole, part, subpart.
  std::array<float, 3> thresholds{0.4f, 0.55f, 0.7f};
};

/// Decoder weights whose mask logits behave like a thresholded cosine
/// between the refined target token and each upscaled image feature.
/// Requires cross_attn_dim == c, u1 >= 2c, u2 >= 2c + 1, hyper_hidden >= 2c.
TensorBundle synthetic_decoder_weights(const DecoderConfig& config, std::uint64_t seed,
                                       const DecoderSynthesis& synthesis = {});

/// Fully random decoder weights of the given scale (tests, benchmarks).
TensorBundle random_decoder_weights(const DecoderConfig& config, std::uint64_t seed,
                                    float scale = 0.1f);

/// Encoder plus structured decoder weights in one bundle.
TensorBundle synthetic_model_weights(const ModelConfig& config, std::uint64_t seed);

struct SceneOptions {
  int size = 128;
  /// Test images per scene besides the reference.
  int test_images = 3;
  int distractors = 2;
};

/// One object: a body shape with an accent patch on a gradient background
/// among distractor shapes. Pair 0 is the reference.
ObjectSamples synthetic_scene(int index, std::uint64_t seed, const SceneOptions& options = {});
std::vector<ObjectSamples> synthetic_suite(int scenes, std::uint64_t seed,
                                           const SceneOptions& options = {});

/// A square of side `side` moving diagonally; frame masks are exact.
ObjectSamples translating_square_video(int frames, std::uint64_t seed, int size = 128, int side = 56,
                                       int step = 4);

/// Large square aligned to the feature grid, as a single image/mask pair.
ObjectSamples self_segmentation_fixture(std::uint64_t seed, int size = 128, int stride = 8);

}  // namespace pseg
