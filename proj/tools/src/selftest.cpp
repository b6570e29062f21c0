#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <string>

#include "pseg/cli.hpp"
#include "pseg/decoder.hpp"
#include "pseg/evalkit.hpp"
#include "pseg/method.hpp"
#include "pseg/rng.hpp"
#include "pseg/synthetic.hpp"

namespace pseg::cli {

namespace {

Tensor random_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

bool rows_sum_to_one(const Tensor& t) {
  const std::size_t cols = t.dim(1);
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += t.at(i, j);
    if (std::abs(s - 1.0) > 1e-6) return false;
  }
  return true;
}

bool check_softmax() {
  Rng rng(1);
  return rows_sum_to_one(softmax(random_rows(rng, 8, 50), 1));
}

bool check_guided_attention() {
  Rng rng(2);
  const Tensor attn = softmax(random_rows(rng, 5, 64), 1);
  const Tensor s = random_rows(rng, 8, 8).reshaped({8, 8});
  const auto bias = AttentionBias::from_confidence(1.0f, s, 8, 8);
  if (!rows_sum_to_one(guided_cross_attention(attn, bias))) return false;
  const auto off = AttentionBias::from_confidence(0.0f, s, 8, 8);
  return guided_cross_attention(attn, off) == softmax(attn, 1);
}

bool check_metrics() {
  Mask full(8, 8, 1), left(8, 8), empty(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) left.at(x, y) = 1;
  return miou(full, full) == 1.0 && miou(left, full) == 0.5 && miou(empty, empty) == 1.0 &&
         boundary_iou(full, full) == 1.0 && boundary_iou(empty, empty) == 1.0;
}

bool check_bundle_roundtrip() {
  Rng rng(3);
  TensorBundle b;
  b.add("a", random_rows(rng, 3, 4));
  b.add("b", random_rows(rng, 1, 7));
  const TensorBundle back = TensorBundle::deserialize(b.serialize());
  return back.checksum() == b.checksum() && bitwise_equal(back.get("a"), b.get("a"));
}

struct Model {
  ModelConfig config;
  std::shared_ptr<const TensorBundle> weights =
      std::make_shared<const TensorBundle>(synthetic_model_weights(config, 1234));
  ImageEncoder encoder{config.encoder, weights};
  MaskDecoder decoder{config.decoder, weights};
};

bool check_self_match(const Model& m) {
  const ObjectSamples fx = self_segmentation_fixture(1234);
  const ReferenceConcept rc = register_concept(fx.images[0], fx.masks[0], m.encoder);
  const FeatureMap f = m.encoder.encode(fx.images[0]);
  const ConfidenceMap cm = confidence_map(rc, f);
  const Tensor md = downsample_mask(fx.masks[0], f.h(), f.w());
  double fg = 0, bg = 0;
  int nf = 0, nb = 0;
  for (std::size_t i = 0; i < cm.scores.size(); ++i) {
    if (cm.scores[i] < -1.0f || cm.scores[i] > 1.0f) return false;
    (md[i] > 0.5f ? fg : bg) += cm.scores[i];
    (md[i] > 0.5f ? nf : nb) += 1;
  }
  return fg / nf > bg / nb;
}

bool check_self_segmentation(const Model& m) {
  const ObjectSamples fx = self_segmentation_fixture(1234);
  const ReferenceConcept rc = register_concept(fx.images[0], fx.masks[0], m.encoder);
  const Segmenter seg(m.encoder, m.decoder, {});
  return miou(seg.segment(rc, fx.images[0]).mask, fx.masks[0]) >= 0.9;
}

bool check_frozen_fit(const Model& m) {
  const ObjectSamples fx = self_segmentation_fixture(7);
  const std::uint64_t before = m.weights->checksum();
  const ReferenceConcept rc = register_concept(fx.images[0], fx.masks[0], m.encoder);
  SegmentOptions o;
  o.mode = SegmentMode::kMultiScale;
  const Segmenter seg(m.encoder, m.decoder, o);
  FitOptions fo;
  fo.iterations = 50;
  fit_scale_weights(rc, fx.images[0], fx.masks[0], seg, fo);
  return m.weights->checksum() == before;
}

bool check_eval_determinism(const Model& m) {
  SceneOptions so;
  so.test_images = 1;
  const auto suite = synthetic_suite(2, 1234, so);
  const auto run = [&] {
    EvalOptions eo;
    eo.jobs = 2;
    return evaluate_objects(
               suite,
               [&] { return std::make_unique<PersonalizedMethod>(m.encoder, m.decoder, SegmentOptions{}); },
               eo)
        .to_json();
  };
  return run() == run();
}

}  // namespace

int run_selftest(std::ostream& out) {
  int failures = 0;
  const auto check = [&](const char* name, const std::function<bool()>& fn) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      out << "  (" << e.what() << ")\n";
    }
    out << (ok ? "ok   " : "FAIL ") << name << "\n";
    failures += ok ? 0 : 1;
  };
  check("softmax rows sum to one", check_softmax);
  check("guided attention rows and alpha = 0", check_guided_attention);
  check("metric analytic cases", check_metrics);
  check("bundle round trip", check_bundle_roundtrip);
  const Model model;
  check("self-match confidence", [&] { return check_self_match(model); });
  check("self-segmentation IoU >= 0.9", [&] { return check_self_segmentation(model); });
  check("weights frozen during fit", [&] { return check_frozen_fit(model); });
  check("eval determinism", [&] { return check_eval_determinism(model); });
  out << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return failures;
}

}  // namespace pseg::cli
