#include "pseg/decoder.hpp"

#include <cmath>

#include "pseg/errors.hpp"
#include "pseg/nn.hpp"

namespace pseg {

namespace {

constexpr float kDecoderNormEps = 1e-5f;
constexpr float kUpscaleNormEps = 1e-6f;

std::string block_prefix(int i) { return "dec.block" + std::to_string(i) + "."; }

// 2x2 stride-2 transposed convolution over an (h, w, cin) grid with a
// PyTorch-layout [cin, cout, 2, 2] kernel.
Tensor conv_transpose_2x2(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2), cout = weight.dim(1);
  Tensor out({2 * h, 2 * w, cout});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const float* src = x.data().data() + (i * w + j) * cin;
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) {
          float* dst = out.data().data() + ((2 * i + a) * 2 * w + (2 * j + b)) * cout;
          for (std::size_t o = 0; o < cout; ++o) dst[o] = bias[o];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const float v = src[ci];
            if (v == 0.0f) continue;
            const float* wk = weight.data().data() + ci * cout * 4 + a * 2 + b;
            for (std::size_t o = 0; o < cout; ++o) dst[o] += v * wk[o * 4];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor MaskLogits::scale(int index) const {
  if (index < 0 || index >= kNumMaskTokens) throw ArgumentError("mask scale index out of range");
  const std::size_t h = scales.dim(1), w = scales.dim(2);
  const auto r = scales.row(static_cast<std::size_t>(index));
  return Tensor({h, w}, std::vector<float>(r.begin(), r.end()));
}

MaskDecoder::MaskDecoder(DecoderConfig config, std::shared_ptr<const TensorBundle> weights)
    : config_(config), weights_(weights), prompts_(config, weights) {
  validate_weights();
}

void MaskDecoder::validate_weights() const {
  const auto c = static_cast<std::size_t>(config_.embed_dim);
  const auto d = static_cast<std::size_t>(config_.cross_attn_dim);
  const auto mlp = static_cast<std::size_t>(config_.mlp_dim);
  const auto u1 = static_cast<std::size_t>(config_.upscale_dim1);
  const auto u2 = static_cast<std::size_t>(config_.upscale_dim2);
  const auto hh = static_cast<std::size_t>(config_.hyper_hidden);
  const TensorBundle& b = *weights_;
  const auto check = [&](const std::string& name, const Shape& dims) {
    if (!b.contains(name)) throw ConfigError("decoder weight missing: '" + name + "'");
    const Tensor& t = b.get(name);
    if (t.dims() != dims) {
      throw ConfigError("decoder weight '" + name + "' has shape " + shape_str(t.dims()) +
                        ", expected " + shape_str(dims));
    }
  };
  const auto check_attn = [&](const std::string& p, std::size_t inner) {
    for (const char* proj : {"q_proj", "k_proj", "v_proj"}) {
      check(p + proj + ".weight", {inner, c});
      check(p + proj + ".bias", {inner});
    }
    check(p + "out_proj.weight", {c, inner});
    check(p + "out_proj.bias", {c});
  };
  const auto check_norm = [&](const std::string& p, std::size_t n) {
    check(p + ".weight", {n});
    check(p + ".bias", {n});
  };
  for (int i = 0; i < config_.depth; ++i) {
    const std::string p = block_prefix(i);
    check_attn(p + "self_attn.", c);
    check_attn(p + "cross_token_to_image.", d);
    check_attn(p + "cross_image_to_token.", d);
    check(p + "mlp.fc1.weight", {mlp, c});
    check(p + "mlp.fc1.bias", {mlp});
    check(p + "mlp.fc2.weight", {c, mlp});
    check(p + "mlp.fc2.bias", {c});
    for (int n = 1; n <= 4; ++n) check_norm(p + "norm" + std::to_string(n), c);
  }
  check_attn("dec.final_attn.", d);
  check_norm("dec.final_norm", c);
  check("dec.upscale.conv1.weight", {c, u1, 2, 2});
  check("dec.upscale.conv1.bias", {u1});
  check_norm("dec.upscale.norm", u1);
  check("dec.upscale.conv2.weight", {u1, u2, 2, 2});
  check("dec.upscale.conv2.bias", {u2});
  for (int k = 0; k < kNumMaskTokens; ++k) {
    const std::string p = "dec.hyper" + std::to_string(k) + ".";
    check(p + "fc0.weight", {hh, c});
    check(p + "fc0.bias", {hh});
    check(p + "fc1.weight", {hh, hh});
    check(p + "fc1.bias", {hh});
    check(p + "fc2.weight", {u2, hh});
    check(p + "fc2.bias", {u2});
  }
}

Tensor MaskDecoder::attend(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                           const std::string& prefix, const AttentionBias* bias,
                           const AttentionObserver& observer) const {
  const TensorBundle& b = *weights_;
  const Tensor q = nn::linear(q_in, b.get(prefix + "q_proj.weight"), b.get(prefix + "q_proj.bias"));
  const Tensor k = nn::linear(k_in, b.get(prefix + "k_proj.weight"), b.get(prefix + "k_proj.bias"));
  const Tensor v = nn::linear(v_in, b.get(prefix + "v_proj.weight"), b.get(prefix + "v_proj.bias"));
  const std::size_t nq = q.dim(0), nk = k.dim(0), inner = q.dim(1);
  const std::size_t heads = config_.heads, dh = inner / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const bool guided = bias != nullptr && bias->active();
  if (guided && bias->s_flat.size() != nk) {
    throw ArgumentError("attention bias covers " + std::to_string(bias->s_flat.size()) +
                        " cells, image has " + std::to_string(nk));
  }

  Tensor mixed({nq, inner});
  Tensor scores({nq, nk});
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const std::size_t off = hd * dh;
    for (std::size_t i = 0; i < nq; ++i) {
      const float* qr = q.data().data() + i * inner + off;
      for (std::size_t j = 0; j < nk; ++j) {
        const float* kr = k.data().data() + j * inner + off;
        float acc = 0.0f;
        for (std::size_t t = 0; t < dh; ++t) acc += qr[t] * kr[t];
        scores.at(i, j) = acc * scale;
        if (guided && config_.bias_pre_softmax) scores.at(i, j) += bias->alpha * bias->s_flat[j];
      }
    }
    Tensor attn = softmax(scores, 1);
    if (guided && !config_.bias_pre_softmax) attn = guided_cross_attention(attn, *bias);
    if (observer) observer(prefix, attn);
    for (std::size_t i = 0; i < nq; ++i) {
      float* dst = mixed.data().data() + i * inner + off;
      for (std::size_t j = 0; j < nk; ++j) {
        const float a = attn.at(i, j);
        const float* vr = v.data().data() + j * inner + off;
        for (std::size_t t = 0; t < dh; ++t) dst[t] += a * vr[t];
      }
    }
  }
  return nn::linear(mixed, b.get(prefix + "out_proj.weight"), b.get(prefix + "out_proj.bias"));
}

Tensor MaskDecoder::upscale(const Tensor& grid) const {
  const TensorBundle& b = *weights_;
  Tensor x = conv_transpose_2x2(grid, b.get("dec.upscale.conv1.weight"), b.get("dec.upscale.conv1.bias"));
  x = nn::layer_norm(x, b.get("dec.upscale.norm.weight"), b.get("dec.upscale.norm.bias"),
                     kUpscaleNormEps);
  nn::gelu_inplace(x);
  x = conv_transpose_2x2(x, b.get("dec.upscale.conv2.weight"), b.get("dec.upscale.conv2.bias"));
  nn::gelu_inplace(x);
  return x;
}

MaskLogits MaskDecoder::decode(const FeatureMap& image, const Tensor& tokens,
                               const AttentionBias* bias, const Tensor* mask_prompt,
                               const AttentionObserver& observer) const {
  const TensorBundle& b = *weights_;
  const auto c = static_cast<std::size_t>(config_.embed_dim);
  if (static_cast<std::size_t>(image.c()) != c) {
    throw ArgumentError("decode: image features have " + std::to_string(image.c()) +
                        " channels, decoder expects " + std::to_string(c));
  }
  if (tokens.rank() != 2 || tokens.dim(1) != c ||
      tokens.dim(0) < static_cast<std::size_t>(kNumMaskTokens)) {
    throw ArgumentError("decode: tokens must be (>= 3, " + std::to_string(c) + "), got " +
                        shape_str(tokens.dims()));
  }
  const int h = image.h(), w = image.w();
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  Tensor keys = image.grid.reshaped({hw, c});
  if (mask_prompt != nullptr) {
    if (mask_prompt->dim(0) != static_cast<std::size_t>(h) ||
        mask_prompt->dim(1) != static_cast<std::size_t>(w)) {
      throw ArgumentError("decode: mask prompt " + shape_str(mask_prompt->dims()) +
                          " does not match the " + std::to_string(h) + "x" + std::to_string(w) +
                          " feature grid");
    }
    nn::add_inplace(keys, prompts_.embed_mask(*mask_prompt));
  }
  const Tensor key_pe = prompts_.dense_positional_encoding(h, w);
  const Tensor& query_pe = tokens;
  Tensor queries = tokens;

  const auto norm = [&](const Tensor& x, const std::string& name) {
    return nn::layer_norm(x, b.get(name + ".weight"), b.get(name + ".bias"), kDecoderNormEps);
  };

  for (int i = 0; i < config_.depth; ++i) {
    const std::string p = block_prefix(i);
    Tensor q = nn::add(queries, query_pe);
    nn::add_inplace(queries, attend(q, q, queries, p + "self_attn.", nullptr, observer));
    queries = norm(queries, p + "norm1");

    q = nn::add(queries, query_pe);
    Tensor k = nn::add(keys, key_pe);
    nn::add_inplace(queries, attend(q, k, keys, p + "cross_token_to_image.", bias, observer));
    queries = norm(queries, p + "norm2");

    Tensor hidden = nn::linear(queries, b.get(p + "mlp.fc1.weight"), b.get(p + "mlp.fc1.bias"));
    nn::relu_inplace(hidden);
    nn::add_inplace(queries, nn::linear(hidden, b.get(p + "mlp.fc2.weight"), b.get(p + "mlp.fc2.bias")));
    queries = norm(queries, p + "norm3");

    q = nn::add(keys, key_pe);
    k = nn::add(queries, query_pe);
    nn::add_inplace(keys, attend(q, k, queries, p + "cross_image_to_token.", nullptr, observer));
    keys = norm(keys, p + "norm4");
  }
  {
    const Tensor q = nn::add(queries, query_pe);
    const Tensor k = nn::add(keys, key_pe);
    nn::add_inplace(queries, attend(q, k, keys, "dec.final_attn.", bias, observer));
    queries = norm(queries, "dec.final_norm");
  }

  const Tensor up = upscale(keys.reshaped({static_cast<std::size_t>(h), static_cast<std::size_t>(w), c}));
  const std::size_t uh = up.dim(0), uw = up.dim(1), u2 = up.dim(2);

  MaskLogits out;
  out.low_res = Tensor({static_cast<std::size_t>(kNumMaskTokens), uh, uw});
  out.scales = Tensor({static_cast<std::size_t>(kNumMaskTokens),
                       static_cast<std::size_t>(image.image_h), static_cast<std::size_t>(image.image_w)});
  for (int t = 0; t < kNumMaskTokens; ++t) {
    const std::string p = "dec.hyper" + std::to_string(t) + ".";
    const auto tok = queries.row(static_cast<std::size_t>(t));
    Tensor x({1, c}, std::vector<float>(tok.begin(), tok.end()));
    x = nn::linear(x, b.get(p + "fc0.weight"), b.get(p + "fc0.bias"));
    nn::relu_inplace(x);
    x = nn::linear(x, b.get(p + "fc1.weight"), b.get(p + "fc1.bias"));
    nn::relu_inplace(x);
    x = nn::linear(x, b.get(p + "fc2.weight"), b.get(p + "fc2.bias"));

    Tensor low({uh, uw});
    for (std::size_t px = 0; px < uh * uw; ++px) {
      const float* e = up.data().data() + px * u2;
      float acc = 0.0f;
      for (std::size_t k = 0; k < u2; ++k) acc += x[k] * e[k];
      low[px] = acc;
    }
    const Tensor full = bilinear_resize(low, image.image_h, image.image_w);
    std::copy(low.data().begin(), low.data().end(), out.low_res.row(t).begin());
    std::copy(full.data().begin(), full.data().end(), out.scales.row(t).begin());
  }
  return out;
}

}  // namespace pseg
