#include "support.hpp"

#include <atomic>
#include <chrono>
#include <unistd.h>

#include "pseg/bundle.hpp"

namespace pseg::testing {

Tensor random_tensor(Rng& rng, const Shape& dims, double sd) {
  Tensor t(dims);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal(0.0, sd));
  return t;
}

std::uint64_t tensor_checksum(const Tensor& t) {
  const auto d = t.data();
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(d.data()), d.size() * sizeof(float)});
}

Mask random_mask(Rng& rng, int w, int h, double p) {
  Mask m(w, h);
  for (auto& b : m.bits) b = rng.bernoulli(p) ? 1 : 0;
  return m;
}

Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  Mask m(w, h);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(x, y) = 1;
  return m;
}

DecoderConfig small_decoder_config() {
  DecoderConfig c;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.mlp_dim = 32;
  c.cross_attn_dim = 8;
  c.upscale_dim1 = 8;
  c.upscale_dim2 = 4;
  c.hyper_hidden = 16;
  return c;
}

FeatureMap random_features(Rng& rng, int h, int w, int c, int stride) {
  FeatureMap f;
  f.grid = random_tensor(rng, {static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                               static_cast<std::size_t>(c)});
  f.image_h = h * stride;
  f.image_w = w * stride;
  f.stride = stride;
  return f;
}

SyntheticModel::SyntheticModel(std::uint64_t seed)
    : weights(std::make_shared<const TensorBundle>(synthetic_model_weights(config, seed))),
      encoder(config.encoder, weights),
      decoder(config.decoder, weights) {}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = std::filesystem::temp_directory_path() /
          ("pseg_test_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" +
           std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace pseg::testing
