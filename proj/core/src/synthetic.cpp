#include "pseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pseg/errors.hpp"
#include "pseg/rng.hpp"

namespace pseg {

namespace {

Tensor normal_tensor(Rng& rng, const Shape& dims, double sd) {
  Tensor t(dims);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal(0.0, sd));
  return t;
}

Tensor filled(const Shape& dims, float value) {
  Tensor t(dims);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

void add_norm(TensorBundle& b, const std::string& prefix, std::size_t n) {
  b.add(prefix + ".weight", filled({n}, 1.0f));
  b.add(prefix + ".bias", Tensor({n}));
}

void add_linear(TensorBundle& b, Rng& rng, const std::string& prefix, std::size_t out,
                std::size_t in, double sd) {
  b.add(prefix + ".weight", normal_tensor(rng, {out, in}, sd));
  b.add(prefix + ".bias", Tensor({out}));
}

void add_random_attention(TensorBundle& b, Rng& rng, const std::string& p, std::size_t c,
                          std::size_t inner, double sd) {
  for (const char* proj : {"q_proj", "k_proj", "v_proj"}) add_linear(b, rng, p + proj, inner, c, sd);
  add_linear(b, rng, p + "out_proj", c, inner, sd);
}

Tensor scaled_identity(std::size_t n, float gain) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = gain;
  return t;
}

void add_identity_attention(TensorBundle& b, const std::string& p, std::size_t c, float qk,
                            float out) {
  b.add(p + "q_proj.weight", scaled_identity(c, qk));
  b.add(p + "k_proj.weight", scaled_identity(c, qk));
  b.add(p + "v_proj.weight", scaled_identity(c, 1.0f));
  b.add(p + "out_proj.weight", scaled_identity(c, out));
  for (const char* proj : {"q_proj", "k_proj", "v_proj", "out_proj"}) {
    b.add(p + proj + ".bias", Tensor({c}));
  }
}

std::string block(int i) { return "dec.block" + std::to_string(i) + "."; }

void add_prompt_weights(TensorBundle& b, Rng& rng, std::size_t c, double pe_sd, double kind_sd) {
  b.add("dec.prompt.pe_gaussian", normal_tensor(rng, {2, c / 2}, pe_sd));
  b.add("dec.prompt.kind_embed", normal_tensor(rng, {4, c}, kind_sd));
}

}  // namespace

TensorBundle synthetic_encoder_weights(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto c = static_cast<std::size_t>(config.embed_dim);
  const auto p = static_cast<std::size_t>(config.patch_size);
  const auto g = static_cast<std::size_t>(config.grid());
  const auto m = static_cast<std::size_t>(config.mlp_dim);
  TensorBundle b;

  // Each output channel is a colour projection averaged over the patch,
  // with a little per-pixel jitter.
  Tensor patch({c, 3, p, p});
  const double inv_area = 1.0 / static_cast<double>(p * p);
  for (std::size_t o = 0; o < c; ++o) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double base = rng.normal();
      for (std::size_t k = 0; k < p * p; ++k) {
        patch[(o * 3 + ch) * p * p + k] = static_cast<float>((base + 0.1 * rng.normal()) * inv_area);
      }
    }
  }
  b.add("enc.patch_embed.weight", std::move(patch));
  b.add("enc.patch_embed.bias", Tensor({c}));
  b.add("enc.pos_embed", normal_tensor(rng, {g, g, c}, 0.02));

  const double sc = 1.0 / std::sqrt(static_cast<double>(c));
  const double sm = 1.0 / std::sqrt(static_cast<double>(m));
  for (int i = 0; i < config.depth; ++i) {
    const std::string pre = "enc.block" + std::to_string(i) + ".";
    add_norm(b, pre + "norm1", c);
    add_linear(b, rng, pre + "attn.qkv", 3 * c, c, 0.5 * sc);
    add_linear(b, rng, pre + "attn.proj", c, c, 0.3 * sc);
    add_norm(b, pre + "norm2", c);
    add_linear(b, rng, pre + "mlp.fc1", m, c, sc);
    add_linear(b, rng, pre + "mlp.fc2", c, m, 0.5 * sm);
  }
  add_norm(b, "enc.norm", c);
  return b;
}

TensorBundle synthetic_decoder_weights(const DecoderConfig& config, std::uint64_t seed,
                                       const DecoderSynthesis& s) {
  config.validate();
  const auto c = static_cast<std::size_t>(config.embed_dim);
  const auto u1 = static_cast<std::size_t>(config.upscale_dim1);
  const auto u2 = static_cast<std::size_t>(config.upscale_dim2);
  const auto hh = static_cast<std::size_t>(config.hyper_hidden);
  const auto mlp = static_cast<std::size_t>(config.mlp_dim);
  if (static_cast<std::size_t>(config.cross_attn_dim) != c || u1 < 2 * c || u2 < 2 * c + 1 ||
      hh < 2 * c) {
    throw ArgumentError(
        "structured decoder needs cross_attn_dim == c, u1 >= 2c, u2 >= 2c + 1, hyper_hidden >= 2c");
  }
  Rng rng(seed);
  TensorBundle b;
  const float unit = 1.0f / std::sqrt(static_cast<float>(c));

  Tensor tokens({static_cast<std::size_t>(kNumMaskTokens), c});
  for (auto& v : tokens.data()) v = s.token_scale * unit + static_cast<float>(rng.normal(0.0, s.token_noise));
  b.add("dec.mask_tokens", std::move(tokens));
  add_prompt_weights(b, rng, c, s.pe_scale, 0.1);
  b.add("dec.prompt.mask_proj.weight", filled({c}, s.mask_gain * unit));
  b.add("dec.prompt.mask_proj.bias", Tensor({c}));

  for (int i = 0; i < config.depth; ++i) {
    const std::string p = block(i);
    add_random_attention(b, rng, p + "self_attn.", c, c, s.small);
    add_identity_attention(b, p + "cross_token_to_image.", c, s.qk_gain, s.value_gain);
    add_random_attention(b, rng, p + "cross_image_to_token.", c, c, s.small);
    add_linear(b, rng, p + "mlp.fc1", mlp, c, s.small);
    add_linear(b, rng, p + "mlp.fc2", c, mlp, s.small);
    for (int n = 1; n <= 4; ++n) add_norm(b, p + "norm" + std::to_string(n), c);
  }
  add_identity_attention(b, "dec.final_attn.", c, s.qk_gain, s.value_gain);
  add_norm(b, "dec.final_norm", c);

  // conv1 lifts F to [F; -F] on every sub-pixel, so the layer norm keeps F
  // up to a fixed factor and GELU(x) - GELU(-x) = x recovers it in conv2.
  Tensor conv1({c, u1, 2, 2});
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      conv1[(i * u1 + i) * 4 + k] = 1.0f;
      conv1[(i * u1 + i + c) * 4 + k] = -1.0f;
    }
  }
  b.add("dec.upscale.conv1.weight", std::move(conv1));
  b.add("dec.upscale.conv1.bias", Tensor({u1}));
  add_norm(b, "dec.upscale.norm", u1);
  constexpr float kConstChannel = 3.0f;
  Tensor conv2({u1, u2, 2, 2});
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      conv2[(i * u2 + i) * 4 + k] = 1.0f;
      conv2[((i + c) * u2 + i) * 4 + k] = -1.0f;
      conv2[(i * u2 + i + c) * 4 + k] = -1.0f;
      conv2[((i + c) * u2 + i + c) * 4 + k] = 1.0f;
    }
  }
  b.add("dec.upscale.conv2.weight", std::move(conv2));
  Tensor conv2_bias({u2});
  conv2_bias[2 * c] = kConstChannel;
  b.add("dec.upscale.conv2.bias", std::move(conv2_bias));

  const double lift = std::sqrt(static_cast<double>(u1) / (2.0 * static_cast<double>(c)));
  const double gelu_const = 0.5 * kConstChannel * (1.0 + std::erf(kConstChannel / std::sqrt(2.0)));
  for (int k = 0; k < kNumMaskTokens; ++k) {
    const std::string p = "dec.hyper" + std::to_string(k) + ".";
    Tensor fc0({hh, c});
    for (std::size_t i = 0; i < c; ++i) {
      fc0.at(i, i) = 1.0f;
      fc0.at(i + c, i) = -1.0f;
    }
    b.add(p + "fc0.weight", std::move(fc0));
    b.add(p + "fc0.bias", Tensor({hh}));
    Tensor fc1({hh, hh});
    for (std::size_t i = 0; i < 2 * c; ++i) fc1.at(i, i) = 1.0f;
    b.add(p + "fc1.weight", std::move(fc1));
    b.add(p + "fc1.bias", Tensor({hh}));
    Tensor fc2({u2, hh});
    for (std::size_t i = 0; i < c; ++i) {
      fc2.at(i, i) = s.logit_gain;
      fc2.at(i, i + c) = -s.logit_gain;
      fc2.at(i + c, i) = -s.logit_gain;
      fc2.at(i + c, i + c) = s.logit_gain;
    }
    b.add(p + "fc2.weight", std::move(fc2));
    Tensor fc2_bias({u2});
    const double offset = -static_cast<double>(s.logit_gain) * static_cast<double>(c) * lift *
                          static_cast<double>(s.thresholds[static_cast<std::size_t>(k)]);
    fc2_bias[2 * c] = static_cast<float>(offset / gelu_const);
    b.add(p + "fc2.bias", std::move(fc2_bias));
  }
  return b;
}

TensorBundle random_decoder_weights(const DecoderConfig& config, std::uint64_t seed, float scale) {
  config.validate();
  Rng rng(seed);
  const auto c = static_cast<std::size_t>(config.embed_dim);
  const auto d = static_cast<std::size_t>(config.cross_attn_dim);
  const auto u1 = static_cast<std::size_t>(config.upscale_dim1);
  const auto u2 = static_cast<std::size_t>(config.upscale_dim2);
  const auto hh = static_cast<std::size_t>(config.hyper_hidden);
  const auto mlp = static_cast<std::size_t>(config.mlp_dim);
  TensorBundle b;
  b.add("dec.mask_tokens", normal_tensor(rng, {static_cast<std::size_t>(kNumMaskTokens), c}, 1.0));
  add_prompt_weights(b, rng, c, 1.0, 1.0);
  b.add("dec.prompt.mask_proj.weight", normal_tensor(rng, {c}, scale));
  b.add("dec.prompt.mask_proj.bias", normal_tensor(rng, {c}, scale));
  for (int i = 0; i < config.depth; ++i) {
    const std::string p = block(i);
    add_random_attention(b, rng, p + "self_attn.", c, c, scale);
    add_random_attention(b, rng, p + "cross_token_to_image.", c, d, scale);
    add_random_attention(b, rng, p + "cross_image_to_token.", c, d, scale);
    add_linear(b, rng, p + "mlp.fc1", mlp, c, scale);
    add_linear(b, rng, p + "mlp.fc2", c, mlp, scale);
    for (int n = 1; n <= 4; ++n) add_norm(b, p + "norm" + std::to_string(n), c);
  }
  add_random_attention(b, rng, "dec.final_attn.", c, d, scale);
  add_norm(b, "dec.final_norm", c);
  b.add("dec.upscale.conv1.weight", normal_tensor(rng, {c, u1, 2, 2}, scale));
  b.add("dec.upscale.conv1.bias", normal_tensor(rng, {u1}, scale));
  add_norm(b, "dec.upscale.norm", u1);
  b.add("dec.upscale.conv2.weight", normal_tensor(rng, {u1, u2, 2, 2}, scale));
  b.add("dec.upscale.conv2.bias", normal_tensor(rng, {u2}, scale));
  for (int k = 0; k < kNumMaskTokens; ++k) {
    const std::string p = "dec.hyper" + std::to_string(k) + ".";
    add_linear(b, rng, p + "fc0", hh, c, scale);
    add_linear(b, rng, p + "fc1", hh, hh, scale);
    add_linear(b, rng, p + "fc2", u2, hh, scale);
  }
  return b;
}

TensorBundle synthetic_model_weights(const ModelConfig& config, std::uint64_t seed) {
  TensorBundle b = synthetic_encoder_weights(config.encoder, seed);
  const TensorBundle dec = synthetic_decoder_weights(config.decoder, seed + 1);
  for (const auto& [name, tensor] : dec.entries()) b.add(name, tensor);
  return b;
}

// Scenes ---------------------------------------------------------------------

namespace {

struct Rgb {
  int r, g, b;
};

// Saturated hues well away from the normalisation mean, so that no colour
// collapses to a near-zero feature.
constexpr Rgb kPalette[] = {
    {220, 40, 40},   {40, 190, 60},  {40, 70, 220},  {235, 215, 40},
    {210, 50, 200},  {40, 205, 215}, {245, 140, 30}, {120, 40, 180},
};
constexpr int kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

enum class ShapeKind { kEllipse, kRect, kDiamond };

struct Shape2d {
  ShapeKind kind;
  double cx, cy, rx, ry;

  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    switch (kind) {
      case ShapeKind::kEllipse: return dx * dx + dy * dy <= 1.0;
      case ShapeKind::kRect: return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
      case ShapeKind::kDiamond: return std::abs(dx) + std::abs(dy) <= 1.0;
    }
    return false;
  }
  bool overlaps(const Shape2d& o, double margin) const {
    return std::abs(cx - o.cx) < rx + o.rx + margin && std::abs(cy - o.cy) < ry + o.ry + margin;
  }
};

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Rgb darken(Rgb c, double f) {
  return {static_cast<int>(c.r * f), static_cast<int>(c.g * f), static_cast<int>(c.b * f)};
}

Image gradient_background(Rng& rng, int size, Rgb a, Rgb b, double noise) {
  Image img(size, size);
  const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979);
  const double ux = std::cos(angle), uy = std::sin(angle);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t = std::clamp(0.5 + ((x - size / 2.0) * ux + (y - size / 2.0) * uy) / size, 0.0, 1.0);
      auto* px = img.pixel(x, y);
      px[0] = clamp8(a.r + t * (b.r - a.r) + rng.uniform(-noise, noise));
      px[1] = clamp8(a.g + t * (b.g - a.g) + rng.uniform(-noise, noise));
      px[2] = clamp8(a.b + t * (b.b - a.b) + rng.uniform(-noise, noise));
    }
  }
  return img;
}

void paint(Image& img, Rng& rng, const Shape2d& shape, Rgb col, double noise, Mask* mask) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!shape.contains(x + 0.5, y + 0.5)) continue;
      auto* px = img.pixel(x, y);
      px[0] = clamp8(col.r + rng.uniform(-noise, noise));
      px[1] = clamp8(col.g + rng.uniform(-noise, noise));
      px[2] = clamp8(col.b + rng.uniform(-noise, noise));
      if (mask != nullptr) mask->at(x, y) = 1;
    }
  }
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d.png", prefix, i);
  return buf;
}

constexpr double kNoise = 8.0;

}  // namespace

ObjectSamples synthetic_scene(int index, std::uint64_t seed, const SceneOptions& options) {
  if (options.size < 32 || options.test_images < 1 || options.distractors < 0) {
    throw ArgumentError("synthetic_scene: size >= 32 and at least one test image required");
  }
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) + 1);
  int order[kPaletteSize];
  for (int i = 0; i < kPaletteSize; ++i) order[i] = i;
  for (int i = kPaletteSize - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  const Rgb body = kPalette[order[0]];
  const Rgb accent = kPalette[order[1]];
  const Rgb bg_a = darken(kPalette[order[2]], 0.35);
  const Rgb bg_b = darken(kPalette[order[3]], 0.5);
  const Rgb distract[2] = {kPalette[order[4]], kPalette[order[5]]};
  const auto kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
  const int size = options.size;
  const double base_rx = rng.uniform(0.16, 0.22) * size;
  const double base_ry = base_rx * rng.uniform(0.75, 1.25);

  ObjectSamples obj;
  char name[32];
  std::snprintf(name, sizeof(name), "scene_%02d", index);
  obj.name = name;
  for (int i = 0; i <= options.test_images; ++i) {
    const double scale = i == 0 ? 1.0 : rng.uniform(0.85, 1.15);
    const double rx = base_rx * scale, ry = base_ry * scale;
    const Shape2d shape{kind, rng.uniform(rx + 2, size - rx - 2), rng.uniform(ry + 2, size - ry - 2), rx, ry};
    const Shape2d accent_shape{ShapeKind::kEllipse, shape.cx - 0.35 * rx, shape.cy - 0.35 * ry,
                               0.3 * rx, 0.3 * ry};
    Image img = gradient_background(rng, size, bg_a, bg_b, kNoise);
    std::vector<Shape2d> placed{shape};
    for (int d = 0; d < options.distractors; ++d) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double drx = rng.uniform(0.08, 0.16) * size, dry = drx * rng.uniform(0.7, 1.3);
        const Shape2d cand{static_cast<ShapeKind>(rng.uniform_int(0, 2)),
                           rng.uniform(drx, size - drx), rng.uniform(dry, size - dry), drx, dry};
        if (std::none_of(placed.begin(), placed.end(),
                         [&](const Shape2d& p) { return p.overlaps(cand, 4.0); })) {
          paint(img, rng, cand, distract[d % 2], kNoise, nullptr);
          placed.push_back(cand);
          break;
        }
      }
    }
    Mask mask(size, size);
    paint(img, rng, shape, body, kNoise, &mask);
    paint(img, rng, accent_shape, accent, kNoise, &mask);
    obj.files.push_back(numbered("", i));
    obj.images.push_back(std::move(img));
    obj.masks.push_back(std::move(mask));
  }
  return obj;
}

std::vector<ObjectSamples> synthetic_suite(int scenes, std::uint64_t seed, const SceneOptions& options) {
  if (scenes < 1) throw ArgumentError("synthetic_suite: need at least one scene");
  std::vector<ObjectSamples> out;
  for (int i = 0; i < scenes; ++i) out.push_back(synthetic_scene(i, seed, options));
  return out;
}

ObjectSamples translating_square_video(int frames, std::uint64_t seed, int size, int side, int step) {
  if (frames < 1 || side < 1 || 8 + side + step * (frames - 1) > size) {
    throw ArgumentError("translating_square_video: square leaves the frame");
  }
  Rng rng(seed);
  const Rgb bg_a = darken(kPalette[2], 0.35), bg_b = darken(kPalette[7], 0.5);
  const Rgb col = kPalette[6];
  ObjectSamples obj;
  obj.name = "square";
  for (int t = 0; t < frames; ++t) {
    const double x0 = 8 + step * t, y0 = 8 + step * t;
    const Shape2d sq{ShapeKind::kRect, x0 + side / 2.0, y0 + side / 2.0, side / 2.0, side / 2.0};
    Image img = gradient_background(rng, size, bg_a, bg_b, kNoise);
    Mask mask(size, size);
    paint(img, rng, sq, col, kNoise, &mask);
    obj.files.push_back(numbered("frame_", t));
    obj.images.push_back(std::move(img));
    obj.masks.push_back(std::move(mask));
  }
  return obj;
}

ObjectSamples self_segmentation_fixture(std::uint64_t seed, int size, int stride) {
  if (size < 4 * stride) throw ArgumentError("self_segmentation_fixture: image too small");
  Rng rng(seed);
  const int cells = size / stride;
  const double lo = (cells / 4) * stride, hi = (cells - cells / 4) * stride;
  const Shape2d sq{ShapeKind::kRect, (lo + hi) / 2, (lo + hi) / 2, (hi - lo) / 2, (hi - lo) / 2};
  Image img = gradient_background(rng, size, darken(kPalette[2], 0.35), darken(kPalette[5], 0.4), kNoise);
  Mask mask(size, size);
  paint(img, rng, sq, kPalette[0], kNoise, &mask);
  ObjectSamples obj;
  obj.name = "self";
  obj.files.push_back("000.png");
  obj.images.push_back(std::move(img));
  obj.masks.push_back(std::move(mask));
  return obj;
}

}  // namespace pseg
