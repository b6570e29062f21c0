#include <gtest/gtest.h>

#include <fstream>

#include "pseg/errors.hpp"
#include "pseg/model_config.hpp"
#include "pseg/result_io.hpp"
#include "support.hpp"

namespace pseg {
namespace {

TEST(ModelConfig, DefaultsAndOverrides) {
  const ModelConfig c = model_config_from_json(R"({"encoder": {"depth": 3}, "decoder": {"bias_pre_softmax": true}})");
  EXPECT_EQ(c.encoder.depth, 3);
  EXPECT_EQ(c.encoder.embed_dim, 64);
  EXPECT_TRUE(c.decoder.bias_pre_softmax);
  const ModelConfig d = model_config_from_json("{}");
  EXPECT_EQ(d.encoder.resolution, 128);
  EXPECT_FALSE(d.decoder.bias_pre_softmax);
}

TEST(ModelConfig, RoundTrip) {
  ModelConfig c;
  c.encoder.mode = EncoderMode::kPrecomputed;
  c.decoder.mlp_dim = 96;
  const ModelConfig back = model_config_from_json(model_config_to_json(c));
  EXPECT_EQ(back.encoder.mode, EncoderMode::kPrecomputed);
  EXPECT_EQ(back.decoder.mlp_dim, 96);
  testing::TempDir dir;
  save_model_config(dir.path() / "m.json", c);
  EXPECT_EQ(load_model_config(dir.path() / "m.json").decoder.mlp_dim, 96);
}

TEST(ModelConfig, Errors) {
  EXPECT_THROW(model_config_from_json(R"({"encoders": {}})"), ConfigError);
  EXPECT_THROW(model_config_from_json(R"({"encoder": {"depht": 2}})"), ConfigError);
  EXPECT_THROW(model_config_from_json(R"({"encoder": {"mode": "vit-h"}})"), ConfigError);
  EXPECT_THROW(model_config_from_json(R"({"encoder": {"depth": "two"}})"), ConfigError);
  EXPECT_THROW(model_config_from_json("{"), ConfigError);
}

TEST(RunConfig, ParsesAndRejectsUnknownKeys) {
  const RunConfig r = run_config_from_json(R"({"alpha": 0.5, "mode": "persam-f", "refine": false, "iters": 10})");
  EXPECT_FLOAT_EQ(r.alpha, 0.5f);
  EXPECT_EQ(r.mode, "persam-f");
  EXPECT_FALSE(r.refine);
  EXPECT_EQ(r.iters, 10);
  EXPECT_EQ(r.seed, 1234u);
  EXPECT_EQ(r.weights, "builtin");
  EXPECT_THROW(run_config_from_json(R"({"alpah": 1})"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/run.json"), IoError);
}

TEST(ResultIo, ModeNamesAndConceptFiles) {
  EXPECT_EQ(parse_mode("persam"), SegmentMode::kTrainingFree);
  EXPECT_EQ(parse_mode("persam-f"), SegmentMode::kMultiScale);
  EXPECT_EQ(mode_name(SegmentMode::kMultiScale), "persam-f");
  EXPECT_THROW(parse_mode("sam"), ArgumentError);

  Rng rng(1);
  ReferenceConcept rc;
  rc.locals = testing::random_tensor(rng, {3, 4});
  rc.global = target_embedding(rc.locals);
  rc.reference_id = "r.png";
  testing::TempDir dir;
  write_concept(dir.path() / "c.pstb", rc);
  const ReferenceConcept back = read_concept(dir.path() / "c.pstb");
  EXPECT_TRUE(bitwise_equal(back.locals, rc.locals));
  EXPECT_EQ(back.reference_id, "r.png");
}

}  // namespace
}  // namespace pseg
