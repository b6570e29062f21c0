#include <cmath>
#include <numbers>

#include "pseg/decoder.hpp"
#include "pseg/errors.hpp"

namespace pseg {

void DecoderConfig::validate() const {
  if (embed_dim <= 0 || depth < 0 || heads <= 0 || mlp_dim <= 0 || cross_attn_dim <= 0 ||
      upscale_dim1 <= 0 || upscale_dim2 <= 0 || hyper_hidden <= 0) {
    throw ArgumentError("decoder config: all sizes must be positive");
  }
  if (embed_dim % 2 != 0) throw ArgumentError("decoder config: embed_dim must be even");
  if (embed_dim % heads != 0 || cross_attn_dim % heads != 0) {
    throw ArgumentError("decoder config: attention widths must be divisible by heads");
  }
}

AttentionBias AttentionBias::from_confidence(float alpha, const Tensor& scores, int h, int w) {
  if (alpha < 0.0f) throw ArgumentError("attention bias: alpha must be >= 0");
  if (scores.rank() != 2) throw ArgumentError("attention bias: confidence map must be (h, w)");
  const Tensor resized = bilinear_resize(scores, h, w);
  AttentionBias b;
  b.alpha = alpha;
  b.h = h;
  b.w = w;
  b.s_flat = softmax(resized.reshaped({resized.size()}), 0);
  return b;
}

Tensor guided_cross_attention(const Tensor& attn, const AttentionBias& bias) {
  if (attn.rank() != 2) throw ArgumentError("guided_cross_attention: attention must be rank 2");
  const std::size_t rows = attn.dim(0), cols = attn.dim(1);
  if (bias.s_flat.size() != cols) {
    throw ArgumentError("guided_cross_attention: bias covers " +
                        std::to_string(bias.s_flat.size()) + " cells, attention has " +
                        std::to_string(cols));
  }
  Tensor biased({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      biased.at(i, j) = attn.at(i, j) + bias.alpha * bias.s_flat[j];
    }
  }
  return softmax(biased, 1);
}

Tensor semantic_prompt_tokens(const Tensor& target, const MaskTokens& mask_tokens,
                              const PromptTokens& prompts) {
  const Tensor& tm = mask_tokens.tokens;
  const Tensor& tp = prompts.tokens;
  if (tm.rank() != 2 || tp.rank() != 2) throw ArgumentError("semantic_prompt_tokens: rank-2 tokens");
  const std::size_t c = tm.dim(1);
  if (tp.dim(1) != c || target.size() != c) {
    throw ArgumentError("semantic_prompt_tokens: channel mismatch (mask tokens " +
                        std::to_string(c) + ", prompts " + std::to_string(tp.dim(1)) +
                        ", target " + std::to_string(target.size()) + ")");
  }
  const std::size_t m = tm.dim(0), k = tp.dim(0);
  Tensor out({m + k, c});
  for (std::size_t i = 0; i < m + k; ++i) {
    const auto src = i < m ? tm.row(i) : tp.row(i - m);
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = src[j] + target[j];
  }
  return out;
}

PromptEncoder::PromptEncoder(DecoderConfig config, std::shared_ptr<const TensorBundle> weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  if (!weights_) throw ArgumentError("prompt encoder requires weights");
  const auto c = static_cast<std::size_t>(config_.embed_dim);
  const auto check = [&](const std::string& name, const Shape& dims) {
    const Tensor& t = weights_->get(name);
    if (t.dims() != dims) {
      throw ConfigError("decoder weight '" + name + "' has shape " + shape_str(t.dims()) +
                        ", expected " + shape_str(dims));
    }
  };
  check("dec.prompt.pe_gaussian", {2, c / 2});
  check("dec.prompt.kind_embed", {4, c});
  check("dec.prompt.mask_proj.weight", {c});
  check("dec.prompt.mask_proj.bias", {c});
  check("dec.mask_tokens", {static_cast<std::size_t>(kNumMaskTokens), c});
}

Tensor PromptEncoder::positional_encoding(float x_norm, float y_norm) const {
  const Tensor& g = weights_->get("dec.prompt.pe_gaussian");
  const std::size_t half = g.dim(1);
  const double x = 2.0 * x_norm - 1.0, y = 2.0 * y_norm - 1.0;
  Tensor pe({2 * half});
  for (std::size_t k = 0; k < half; ++k) {
    const double phase = 2.0 * std::numbers::pi * (x * g.at(0, k) + y * g.at(1, k));
    pe[k] = static_cast<float>(std::sin(phase));
    pe[half + k] = static_cast<float>(std::cos(phase));
  }
  return pe;
}

Tensor PromptEncoder::dense_positional_encoding(int h, int w) const {
  const auto c = static_cast<std::size_t>(config_.embed_dim);
  Tensor out({static_cast<std::size_t>(h) * w, c});
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const Tensor pe = positional_encoding((col + 0.5f) / w, (r + 0.5f) / h);
      std::copy(pe.data().begin(), pe.data().end(),
                out.row(static_cast<std::size_t>(r) * w + col).begin());
    }
  }
  return out;
}

PromptTokens PromptEncoder::encode_prompts(const LocationPrior& points, const std::optional<Box>& box,
                                           int image_w, int image_h) const {
  if (image_w <= 0 || image_h <= 0) throw ArgumentError("encode_prompts: bad image extents");
  const auto inside = [&](float x, float y) {
    return x >= 0.0f && y >= 0.0f && x <= static_cast<float>(image_w) &&
           y <= static_cast<float>(image_h);
  };
  struct Item {
    float x, y;
    PromptKind kind;
  };
  std::vector<Item> items = {{points.positive.x, points.positive.y, PromptKind::kPositive},
                             {points.negative.x, points.negative.y, PromptKind::kNegative}};
  if (box) {
    if (box->x1 < box->x0 || box->y1 < box->y0) throw ArgumentError("encode_prompts: inverted box");
    // Pixel centres of the corner pixels.
    items.push_back({box->x0 + 0.5f, box->y0 + 0.5f, PromptKind::kBoxTopLeft});
    items.push_back({box->x1 + 0.5f, box->y1 + 0.5f, PromptKind::kBoxBottomRight});
  }
  const Tensor& kinds = weights_->get("dec.prompt.kind_embed");
  const auto c = static_cast<std::size_t>(config_.embed_dim);
  PromptTokens out{Tensor({items.size(), c}), {}};
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Item& it = items[i];
    if (!inside(it.x, it.y)) {
      throw ArgumentError("encode_prompts: point (" + std::to_string(it.x) + ", " +
                          std::to_string(it.y) + ") outside " + std::to_string(image_w) + "x" +
                          std::to_string(image_h) + " image");
    }
    const Tensor pe = positional_encoding(it.x / image_w, it.y / image_h);
    const auto kind_row = kinds.row(static_cast<std::size_t>(it.kind));
    auto dst = out.tokens.row(i);
    for (std::size_t j = 0; j < c; ++j) dst[j] = pe[j] + kind_row[j];
    out.kinds.push_back(it.kind);
  }
  return out;
}

MaskTokens PromptEncoder::mask_tokens() const { return MaskTokens{weights_->get("dec.mask_tokens")}; }

Tensor PromptEncoder::embed_mask(const Tensor& mask_logits) const {
  if (mask_logits.rank() < 2 || (mask_logits.rank() == 3 && mask_logits.dim(2) != 1)) {
    throw ArgumentError("embed_mask: expected (h, w) or (h, w, 1) logits");
  }
  const Tensor& w = weights_->get("dec.prompt.mask_proj.weight");
  const Tensor& b = weights_->get("dec.prompt.mask_proj.bias");
  const std::size_t h = mask_logits.dim(0), wd = mask_logits.dim(1), c = w.size();
  Tensor out({h, wd, c});
  for (std::size_t cell = 0; cell < h * wd; ++cell) {
    const float m = mask_logits[cell];
    for (std::size_t k = 0; k < c; ++k) out[cell * c + k] = m * w[k] + b[k];
  }
  return out;
}

}  // namespace pseg
