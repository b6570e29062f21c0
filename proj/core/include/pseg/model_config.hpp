#pragma once

#include <filesystem>
#include <string>

#include "pseg/decoder.hpp"
#include "pseg/encoder.hpp"

namespace pseg {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
};

/// {"encoder": {...}, "decoder": {...}}; missing keys keep their defaults,
/// unknown keys raise ConfigError.
ModelConfig model_config_from_json(const std::string& text);
std::string model_config_to_json(const ModelConfig& config);
ModelConfig load_model_config(const std::filesystem::path& path);
void save_model_config(const std::filesystem::path& path, const ModelConfig& config);

/// Run-level settings shared by the command-line tool; command-line flags
/// override values read from a flat JSON object.
struct RunConfig {
  float alpha = 1.0f;
  std::string mode = "persam";
  bool refine = true;
  int iters = 1000;
  double lr = 1e-3;
  int jobs = 1;
  std::uint64_t seed = 1234;
  std::string weights = "builtin";
  std::string model;
  int mask_index = 0;
  double biou_frac = 0.02;
  double f_frac = 0.008;
};

RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace pseg
