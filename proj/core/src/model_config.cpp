#include "pseg/model_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pseg/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pseg {

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  return j;
}

// Reads known keys into fields and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {}

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + ": key '" + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

ModelConfig model_config_from_json(const std::string& text) {
  const json j = parse_object(text, "model config");
  ModelConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key != "encoder" && key != "decoder") throw ConfigError("model config: unknown key '" + key + "'");
    if (!value.is_object()) throw ConfigError("model config: '" + key + "' must be an object");
  }
  if (j.contains("encoder")) {
    Reader r(j["encoder"], "model config encoder");
    std::string mode = cfg.encoder.mode == EncoderMode::kTinyVit ? "tiny-vit" : "precomputed";
    r.get("mode", mode);
    if (mode == "tiny-vit") {
      cfg.encoder.mode = EncoderMode::kTinyVit;
    } else if (mode == "precomputed") {
      cfg.encoder.mode = EncoderMode::kPrecomputed;
    } else {
      throw ConfigError("model config encoder: unknown mode '" + mode + "'");
    }
    r.get("patch_size", cfg.encoder.patch_size);
    r.get("depth", cfg.encoder.depth);
    r.get("heads", cfg.encoder.heads);
    r.get("embed_dim", cfg.encoder.embed_dim);
    r.get("mlp_dim", cfg.encoder.mlp_dim);
    r.get("resolution", cfg.encoder.resolution);
    r.get("stride", cfg.encoder.stride);
    r.finish();
  }
  if (j.contains("decoder")) {
    Reader r(j["decoder"], "model config decoder");
    r.get("embed_dim", cfg.decoder.embed_dim);
    r.get("depth", cfg.decoder.depth);
    r.get("heads", cfg.decoder.heads);
    r.get("mlp_dim", cfg.decoder.mlp_dim);
    r.get("cross_attn_dim", cfg.decoder.cross_attn_dim);
    r.get("upscale_dim1", cfg.decoder.upscale_dim1);
    r.get("upscale_dim2", cfg.decoder.upscale_dim2);
    r.get("hyper_hidden", cfg.decoder.hyper_hidden);
    r.get("bias_pre_softmax", cfg.decoder.bias_pre_softmax);
    r.finish();
  }
  try {
    cfg.encoder.validate();
    cfg.decoder.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  const EncoderConfig& e = cfg.encoder;
  j["encoder"] = {{"mode", e.mode == EncoderMode::kTinyVit ? "tiny-vit" : "precomputed"},
                  {"patch_size", e.patch_size},
                  {"depth", e.depth},
                  {"heads", e.heads},
                  {"embed_dim", e.embed_dim},
                  {"mlp_dim", e.mlp_dim},
                  {"resolution", e.resolution},
                  {"stride", e.stride}};
  const DecoderConfig& d = cfg.decoder;
  j["decoder"] = {{"embed_dim", d.embed_dim},
                  {"depth", d.depth},
                  {"heads", d.heads},
                  {"mlp_dim", d.mlp_dim},
                  {"cross_attn_dim", d.cross_attn_dim},
                  {"upscale_dim1", d.upscale_dim1},
                  {"upscale_dim2", d.upscale_dim2},
                  {"hyper_hidden", d.hyper_hidden},
                  {"bias_pre_softmax", d.bias_pre_softmax}};
  return j.dump(2) + "\n";
}

ModelConfig load_model_config(const fs::path& path) { return model_config_from_json(slurp(path)); }

void save_model_config(const fs::path& path, const ModelConfig& config) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << model_config_to_json(config);
  if (!out) throw IoError("cannot write " + path.string());
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse_object(text, "run config");
  RunConfig cfg;
  Reader r(j, "run config");
  r.get("alpha", cfg.alpha);
  r.get("mode", cfg.mode);
  r.get("refine", cfg.refine);
  r.get("iters", cfg.iters);
  r.get("lr", cfg.lr);
  r.get("jobs", cfg.jobs);
  r.get("seed", cfg.seed);
  r.get("weights", cfg.weights);
  r.get("model", cfg.model);
  r.get("mask_index", cfg.mask_index);
  r.get("biou_frac", cfg.biou_frac);
  r.get("f_frac", cfg.f_frac);
  r.finish();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(slurp(path)); }

}  // namespace pseg
