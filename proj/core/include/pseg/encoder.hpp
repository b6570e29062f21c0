#pragma once

#include <memory>
#include <string>

#include "pseg/bundle.hpp"
#include "pseg/image.hpp"
#include "pseg/tensor.hpp"

namespace pseg {

enum class EncoderMode { kPrecomputed, kTinyVit };

struct EncoderConfig {
  EncoderMode mode = EncoderMode::kTinyVit;
  int patch_size = 8;
  int depth = 2;
  int heads = 2;
  int embed_dim = 64;
  int mlp_dim = 256;
  int resolution = 128;
  /// Image pixels covered by one feature cell.
  int stride = 8;

  int grid() const { return resolution / patch_size; }
  /// Throws ArgumentError on an inconsistent configuration.
  void validate() const;
};

/// h x w x c grid produced by the image encoder, plus where it came from.
struct FeatureMap {
  Tensor grid;
  int image_h = 0;
  int image_w = 0;
  int stride = 1;

  int h() const { return static_cast<int>(grid.dim(0)); }
  int w() const { return static_cast<int>(grid.dim(1)); }
  int c() const { return static_cast<int>(grid.dim(2)); }
};

/// Bundle key under which a precomputed feature grid for `image` is stored.
std::string precomputed_feature_key(const Image& image);

/// Image encoder over an immutable weights bundle. Both modes are pure:
/// encode() is const and safe to call from several threads.
///
/// Tiny-vit weight names (c = embed_dim, p = patch_size, g = grid, m = mlp_dim):
///
///   enc.patch_embed.weight        [c, 3, p, p]
///   enc.patch_embed.bias          [c]
///   enc.pos_embed                 [g, g, c]
///   enc.block{i}.norm1.weight     [c]      (and .bias)
///   enc.block{i}.attn.qkv.weight  [3c, c]  (and .bias [3c])
///   enc.block{i}.attn.proj.weight [c, c]   (and .bias)
///   enc.block{i}.norm2.weight     [c]      (and .bias)
///   enc.block{i}.mlp.fc1.weight   [m, c]   (and .bias [m])
///   enc.block{i}.mlp.fc2.weight   [c, m]   (and .bias [c])
///   enc.norm.weight               [c]      (and .bias)
class ImageEncoder {
 public:
  ImageEncoder(EncoderConfig config, std::shared_ptr<const TensorBundle> weights);

  FeatureMap encode(const Image& image) const;

  const EncoderConfig& config() const noexcept { return config_; }
  const TensorBundle& weights() const noexcept { return *weights_; }

 private:
  FeatureMap encode_tiny_vit(const Image& image) const;
  FeatureMap lookup_precomputed(const Image& image) const;
  void validate_weights() const;

  EncoderConfig config_;
  std::shared_ptr<const TensorBundle> weights_;
};

/// Resamples a binary mask to the feature grid: bilinear, then > 0.5.
/// Returns (h, w, 1). Throws DegenerateMaskError when a non-empty mask
/// vanishes at the target resolution.
Tensor downsample_mask(const Mask& mask, int h, int w);

/// Mask as an (h, w) float tensor of 0/1.
Tensor mask_to_tensor(const Mask& mask);

}  // namespace pseg
