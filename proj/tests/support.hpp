#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "pseg/decoder.hpp"
#include "pseg/encoder.hpp"
#include "pseg/model_config.hpp"
#include "pseg/pipeline.hpp"
#include "pseg/rng.hpp"
#include "pseg/synthetic.hpp"

namespace pseg::testing {

Tensor random_tensor(Rng& rng, const Shape& dims, double sd = 1.0);
Mask random_mask(Rng& rng, int w, int h, double p = 0.5);
Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1);  // half-open

/// FNV-1a over the raw f32 bytes, for pinned golden values.
std::uint64_t tensor_checksum(const Tensor& t);

/// Small decoder config for fast tests.
DecoderConfig small_decoder_config();
/// FeatureMap of random unit-variance features.
FeatureMap random_features(Rng& rng, int h, int w, int c, int stride = 8);

/// Encoder + structured decoder at default sizes with seeded weights.
struct SyntheticModel {
  explicit SyntheticModel(std::uint64_t seed = 1234);
  ModelConfig config;
  std::shared_ptr<const TensorBundle> weights;
  ImageEncoder encoder;
  MaskDecoder decoder;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace pseg::testing
