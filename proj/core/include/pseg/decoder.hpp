#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pseg/bundle.hpp"
#include "pseg/concept.hpp"
#include "pseg/encoder.hpp"
#include "pseg/tensor.hpp"

namespace pseg {

inline constexpr int kNumMaskTokens = 3;

struct DecoderConfig {
  int embed_dim = 64;
  int depth = 2;
  int heads = 2;
  int mlp_dim = 128;
  /// Internal width of the token<->image attention projections.
  int cross_attn_dim = 64;
  int upscale_dim1 = 128;
  int upscale_dim2 = 129;
  int hyper_hidden = 128;
  /// Add alpha * softmax(S) to the pre-softmax scores instead of to the
  /// post-softmax map. Off: the literal two-softmax form is used.
  bool bias_pre_softmax = false;

  void validate() const;
};

enum class PromptKind : int { kPositive = 0, kNegative = 1, kBoxTopLeft = 2, kBoxBottomRight = 3 };

/// Inclusive pixel bounding box.
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct PromptTokens {
  Tensor tokens;  // (k, c)
  std::vector<PromptKind> kinds;
};

struct MaskTokens {
  Tensor tokens;  // (3, c): whole, part, subpart
};

/// alpha and the softmax-normalized flattened confidence map.
struct AttentionBias {
  float alpha = 0.0f;
  Tensor s_flat;  // (h*w)
  int h = 0;
  int w = 0;

  /// Resizes `scores` to (h, w) when needed, flattens and applies softmax.
  static AttentionBias from_confidence(float alpha, const Tensor& scores, int h, int w);
  bool active() const noexcept { return alpha != 0.0f && !s_flat.empty(); }
};

/// softmax(A + alpha * softmax(S)) over the spatial axis of each row.
/// `attn` is (tokens, h*w) and already row-normalized.
Tensor guided_cross_attention(const Tensor& attn, const AttentionBias& bias);

/// Adds T_R to every row of Concat(T_M, T_P).
Tensor semantic_prompt_tokens(const Tensor& target, const MaskTokens& mask_tokens,
                              const PromptTokens& prompts);

/// Per-scale logits at the decoder's 4x grid and at image resolution.
struct MaskLogits {
  Tensor low_res;  // (3, 4h, 4w)
  Tensor scales;   // (3, image_h, image_w)

  /// Copy of one scale as an (image_h, image_w) tensor.
  Tensor scale(int index) const;
};

/// Invoked with every attention map computed by the decoder: layer name and
/// the (queries, keys) row-stochastic matrix of each head.
using AttentionObserver = std::function<void(std::string_view layer, const Tensor& rows)>;

/// Weights live in a TensorBundle under (c = embed_dim, d = cross_attn_dim,
/// u1/u2 = upscale dims, hh = hyper_hidden):
///
///   dec.mask_tokens                        [3, c]
///   dec.prompt.pe_gaussian                 [2, c/2]
///   dec.prompt.kind_embed                  [4, c]   pos, neg, box TL, box BR
///   dec.prompt.mask_proj.weight            [c]      1 -> c mask-prompt map
///   dec.prompt.mask_proj.bias              [c]
///   dec.block{i}.self_attn.{q,k,v}_proj.weight   [c, c]   (.bias [c])
///   dec.block{i}.self_attn.out_proj.weight       [c, c]   (.bias [c])
///   dec.block{i}.cross_token_to_image.{q,k,v}_proj.weight [d, c]   (.bias [d])
///   dec.block{i}.cross_token_to_image.out_proj.weight     [c, d]   (.bias [c])
///   dec.block{i}.cross_image_to_token.*    same shapes as cross_token_to_image
///   dec.block{i}.mlp.fc1.weight            [mlp, c] (.bias)
///   dec.block{i}.mlp.fc2.weight            [c, mlp] (.bias)
///   dec.block{i}.norm{1,2,3,4}.{weight,bias}        [c]
///   dec.final_attn.*                       same shapes as cross_token_to_image
///   dec.final_norm.{weight,bias}           [c]
///   dec.upscale.conv1.weight               [c, u1, 2, 2]  (.bias [u1])
///   dec.upscale.norm.{weight,bias}         [u1]
///   dec.upscale.conv2.weight               [u1, u2, 2, 2] (.bias [u2])
///   dec.hyper{k}.fc0.weight                [hh, c]  (.bias)
///   dec.hyper{k}.fc1.weight                [hh, hh] (.bias)
///   dec.hyper{k}.fc2.weight                [u2, hh] (.bias)
class PromptEncoder {
 public:
  PromptEncoder(DecoderConfig config, std::shared_ptr<const TensorBundle> weights);

  /// Random-Fourier positional encoding of a point in normalized [0, 1]^2.
  Tensor positional_encoding(float x_norm, float y_norm) const;
  /// (h*w, c) encoding of every feature-cell centre.
  Tensor dense_positional_encoding(int h, int w) const;

  /// Two point tokens, plus TL/BR corner tokens when a box is given.
  PromptTokens encode_prompts(const LocationPrior& points, const std::optional<Box>& box,
                              int image_w, int image_h) const;

  MaskTokens mask_tokens() const;

  /// (h, w, c) dense embedding of low-res mask logits (h, w) or (h, w, 1).
  Tensor embed_mask(const Tensor& mask_logits) const;

 private:
  DecoderConfig config_;
  std::shared_ptr<const TensorBundle> weights_;
};

class MaskDecoder {
 public:
  MaskDecoder(DecoderConfig config, std::shared_ptr<const TensorBundle> weights);

  /// Runs the two-way transformer over `tokens` (rows = 3 mask tokens then
  /// prompt tokens). `bias` is applied in every token->image attention; a
  /// null or alpha == 0 bias leaves those maps untouched. `mask_prompt` is
  /// (h, w, 1) low-res logits added through the mask projection.
  MaskLogits decode(const FeatureMap& image, const Tensor& tokens, const AttentionBias* bias,
                    const Tensor* mask_prompt,
                    const AttentionObserver& observer = {}) const;

  const DecoderConfig& config() const noexcept { return config_; }
  const PromptEncoder& prompt_encoder() const noexcept { return prompts_; }
  const TensorBundle& weights() const noexcept { return *weights_; }

 private:
  Tensor attend(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                const std::string& prefix, const AttentionBias* bias,
                const AttentionObserver& observer) const;
  Tensor upscale(const Tensor& grid) const;
  void validate_weights() const;

  DecoderConfig config_;
  std::shared_ptr<const TensorBundle> weights_;
  PromptEncoder prompts_;
};

}  // namespace pseg
