#include "pseg/encoder.hpp"

#include <cmath>

#include "pseg/errors.hpp"
#include "pseg/nn.hpp"

namespace pseg {

namespace {

constexpr float kPixelMean[3] = {123.675f, 116.28f, 103.53f};
constexpr float kPixelStd[3] = {58.395f, 57.12f, 57.375f};
constexpr float kVitNormEps = 1e-6f;

std::string block_key(int i, const char* rest) {
  return "enc.block" + std::to_string(i) + "." + rest;
}

void expect_shape(const TensorBundle& b, const std::string& name, const Shape& dims) {
  const Tensor& t = b.get(name);
  if (t.dims() != dims) {
    throw ConfigError("encoder weight '" + name + "' has shape " + shape_str(t.dims()) +
                      ", expected " + shape_str(dims));
  }
}

// Multi-head self-attention over (n, c) tokens with a fused qkv projection.
Tensor self_attention(const Tensor& x, const Tensor& qkv_w, const Tensor& qkv_b,
                      const Tensor& proj_w, const Tensor& proj_b, int heads) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t dh = c / heads;
  const Tensor qkv = nn::linear(x, qkv_w, qkv_b);  // (n, 3c)
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor mixed({n, c});
  Tensor scores({n, n});
  for (int hd = 0; hd < heads; ++hd) {
    const std::size_t qo = hd * dh, ko = c + hd * dh, vo = 2 * c + hd * dh;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (std::size_t k = 0; k < dh; ++k) acc += qkv.at(i, qo + k) * qkv.at(j, ko + k);
        scores.at(i, j) = acc * scale;
      }
    }
    const Tensor attn = softmax(scores, 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const float a = attn.at(i, j);
        for (std::size_t k = 0; k < dh; ++k) mixed.at(i, hd * dh + k) += a * qkv.at(j, vo + k);
      }
    }
  }
  return nn::linear(mixed, proj_w, proj_b);
}

}  // namespace

void EncoderConfig::validate() const {
  if (patch_size <= 0 || depth < 0 || heads <= 0 || embed_dim <= 0 || resolution <= 0 ||
      stride <= 0 || mlp_dim <= 0) {
    throw ArgumentError("encoder config: all sizes must be positive");
  }
  if (resolution % patch_size != 0) {
    throw ArgumentError("encoder config: resolution " + std::to_string(resolution) +
                        " not divisible by patch size " + std::to_string(patch_size));
  }
  if (embed_dim % heads != 0) {
    throw ArgumentError("encoder config: embed_dim not divisible by heads");
  }
  if (mode == EncoderMode::kTinyVit && stride != patch_size) {
    throw ArgumentError("encoder config: tiny-vit stride must equal patch size");
  }
}

std::string precomputed_feature_key(const Image& image) { return "img:" + content_hash(image); }

ImageEncoder::ImageEncoder(EncoderConfig config, std::shared_ptr<const TensorBundle> weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  if (!weights_) throw ArgumentError("encoder requires a weights bundle");
  if (config_.mode == EncoderMode::kTinyVit) validate_weights();
}

void ImageEncoder::validate_weights() const {
  const auto c = static_cast<std::size_t>(config_.embed_dim);
  const auto p = static_cast<std::size_t>(config_.patch_size);
  const auto g = static_cast<std::size_t>(config_.grid());
  const auto m = static_cast<std::size_t>(config_.mlp_dim);
  const TensorBundle& b = *weights_;
  expect_shape(b, "enc.patch_embed.weight", {c, 3, p, p});
  expect_shape(b, "enc.patch_embed.bias", {c});
  expect_shape(b, "enc.pos_embed", {g, g, c});
  for (int i = 0; i < config_.depth; ++i) {
    expect_shape(b, block_key(i, "norm1.weight"), {c});
    expect_shape(b, block_key(i, "norm1.bias"), {c});
    expect_shape(b, block_key(i, "attn.qkv.weight"), {3 * c, c});
    expect_shape(b, block_key(i, "attn.qkv.bias"), {3 * c});
    expect_shape(b, block_key(i, "attn.proj.weight"), {c, c});
    expect_shape(b, block_key(i, "attn.proj.bias"), {c});
    expect_shape(b, block_key(i, "norm2.weight"), {c});
    expect_shape(b, block_key(i, "norm2.bias"), {c});
    expect_shape(b, block_key(i, "mlp.fc1.weight"), {m, c});
    expect_shape(b, block_key(i, "mlp.fc1.bias"), {m});
    expect_shape(b, block_key(i, "mlp.fc2.weight"), {c, m});
    expect_shape(b, block_key(i, "mlp.fc2.bias"), {c});
  }
  expect_shape(b, "enc.norm.weight", {c});
  expect_shape(b, "enc.norm.bias", {c});
}

FeatureMap ImageEncoder::encode(const Image& image) const {
  if (image.width <= 0 || image.height <= 0) throw ArgumentError("encode: empty image");
  return config_.mode == EncoderMode::kTinyVit ? encode_tiny_vit(image) : lookup_precomputed(image);
}

FeatureMap ImageEncoder::lookup_precomputed(const Image& image) const {
  const std::string key = precomputed_feature_key(image);
  const Tensor& grid = weights_->get(key);
  if (grid.rank() != 3) throw ConfigError("precomputed feature '" + key + "' must be rank 3");
  if (static_cast<int>(grid.dim(2)) != config_.embed_dim) {
    throw ConfigError("precomputed feature '" + key + "' has " + std::to_string(grid.dim(2)) +
                      " channels, expected " + std::to_string(config_.embed_dim));
  }
  const int s = config_.stride;
  const auto covers = [s](std::size_t cells, int pixels) {
    return static_cast<int>(cells) * s >= pixels && (static_cast<int>(cells) - 1) * s < pixels;
  };
  if (!covers(grid.dim(0), image.height) || !covers(grid.dim(1), image.width)) {
    throw ArgumentError("precomputed feature grid " + shape_str(grid.dims()) +
                        " does not cover a " + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + " image at stride " + std::to_string(s));
  }
  return FeatureMap{grid, image.height, image.width, s};
}

FeatureMap ImageEncoder::encode_tiny_vit(const Image& image) const {
  const int res = config_.resolution;
  if (image.width != res || image.height != res) {
    throw ArgumentError("tiny-vit expects a " + std::to_string(res) + "x" + std::to_string(res) +
                        " image, got " + std::to_string(image.width) + "x" +
                        std::to_string(image.height));
  }
  const TensorBundle& b = *weights_;
  const std::size_t p = config_.patch_size, g = config_.grid(), c = config_.embed_dim;
  const std::size_t n = g * g;

  const Tensor& pw = b.get("enc.patch_embed.weight");
  const std::size_t patch_len = 3 * p * p;
  const Tensor patch_w = pw.reshaped({c, patch_len});
  Tensor patches({n, patch_len});
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      float* dst = patches.row(gy * g + gx).data();
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t py = 0; py < p; ++py) {
          for (std::size_t px = 0; px < p; ++px) {
            const auto* pix = image.pixel(static_cast<int>(gx * p + px), static_cast<int>(gy * p + py));
            dst[(ch * p + py) * p + px] = (pix[ch] - kPixelMean[ch]) / kPixelStd[ch];
          }
        }
      }
    }
  }
  Tensor x = nn::linear(patches, patch_w, b.get("enc.patch_embed.bias"));
  nn::add_inplace(x, b.get("enc.pos_embed"));

  for (int i = 0; i < config_.depth; ++i) {
    Tensor h = nn::layer_norm(x, b.get(block_key(i, "norm1.weight")),
                              b.get(block_key(i, "norm1.bias")), kVitNormEps);
    nn::add_inplace(x, self_attention(h, b.get(block_key(i, "attn.qkv.weight")),
                                      b.get(block_key(i, "attn.qkv.bias")),
                                      b.get(block_key(i, "attn.proj.weight")),
                                      b.get(block_key(i, "attn.proj.bias")), config_.heads));
    h = nn::layer_norm(x, b.get(block_key(i, "norm2.weight")), b.get(block_key(i, "norm2.bias")),
                       kVitNormEps);
    Tensor hidden = nn::linear(h, b.get(block_key(i, "mlp.fc1.weight")),
                               b.get(block_key(i, "mlp.fc1.bias")));
    nn::gelu_inplace(hidden);
    nn::add_inplace(x, nn::linear(hidden, b.get(block_key(i, "mlp.fc2.weight")),
                                  b.get(block_key(i, "mlp.fc2.bias"))));
  }
  x = nn::layer_norm(x, b.get("enc.norm.weight"), b.get("enc.norm.bias"), kVitNormEps);
  return FeatureMap{x.reshaped({g, g, c}), image.height, image.width, config_.stride};
}

Tensor mask_to_tensor(const Mask& mask) {
  Tensor t({static_cast<std::size_t>(mask.height), static_cast<std::size_t>(mask.width)});
  for (std::size_t i = 0; i < mask.bits.size(); ++i) t[i] = mask.bits[i] ? 1.0f : 0.0f;
  return t;
}

Tensor downsample_mask(const Mask& mask, int h, int w) {
  if (h <= 0 || w <= 0) throw ArgumentError("downsample_mask: target extents must be >= 1");
  if (mask.width <= 0 || mask.height <= 0) throw ArgumentError("downsample_mask: empty raster");
  const Tensor resized = bilinear_resize(mask_to_tensor(mask), h, w);
  Tensor out({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1});
  std::size_t on = 0;
  for (std::size_t i = 0; i < resized.size(); ++i) {
    out[i] = resized[i] > 0.5f ? 1.0f : 0.0f;
    on += out[i] != 0.0f;
  }
  if (on == 0 && !mask.empty()) {
    throw DegenerateMaskError("mask with " + std::to_string(mask.count()) +
                              " foreground pixels vanishes at " + std::to_string(h) + "x" +
                              std::to_string(w) + " feature resolution");
  }
  return out;
}

}  // namespace pseg
