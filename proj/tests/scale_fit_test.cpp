#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "pseg/errors.hpp"
#include "pseg/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace pseg {
namespace {

using testing::fit_fixture;
using testing::oracle_fit_loss;

TEST(ScaleFit, LossMatchesOracle) {
  const testing::FitFixture f = fit_fixture(1);
  const ScaleFitObjective obj(f.scales, f.target);
  for (auto [a, b] : {std::pair{0.0, 0.0}, {1.0 / 3, 1.0 / 3}, {1.2, -0.4}, {-0.5, 1.5}})
    EXPECT_NEAR(obj.loss({a, b}), oracle_fit_loss(f, a, b), 1e-9);
}

TEST(ScaleFit, AnalyticGradientMatchesFiniteDifferences) {
  const testing::FitFixture f = fit_fixture(2);
  const ScaleFitObjective obj(f.scales, f.target);
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const ScaleWeights w{rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5)};
    std::array<double, 2> g{};
    obj.loss(w, &g);
    const double h = 1e-6;
    const double d1 = (obj.loss({w.w1 + h, w.w2}) - obj.loss({w.w1 - h, w.w2})) / (2 * h);
    const double d2 = (obj.loss({w.w1, w.w2 + h}) - obj.loss({w.w1, w.w2 - h})) / (2 * h);
    EXPECT_NEAR(g[0], d1, 1e-4 * std::max(1.0, std::abs(d1)));
    EXPECT_NEAR(g[1], d2, 1e-4 * std::max(1.0, std::abs(d2)));
  }
}

double fused_iou(const testing::FitFixture& f, const ScaleWeights& w) {
  const Mask m = threshold_logits(fuse_scales(f.scales, w).reshaped({f.scales.dim(1), f.scales.dim(2)}));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    inter += m.bits[i] && f.target.bits[i];
    uni += m.bits[i] || f.target.bits[i];
  }
  return double(inter) / double(uni);
}

TEST(ScaleFit, DefaultBudgetKeepsFusedIoUAtOne) {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const testing::FitFixture f = fit_fixture(seed);
    const auto t0 = std::chrono::steady_clock::now();
    const FitReport r = fit_scale_weights(f.scales, f.target);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_EQ(fused_iou(f, r.weights), 1.0) << "seed " << seed;
    EXPECT_LT(r.final_loss, r.loss_curve.front());
    EXPECT_EQ(r.iterations, 1000);
    EXPECT_EQ(r.loss_curve.size(), 1001u);  // includes the initial loss
    EXPECT_LT(secs, 10.0);
  }
}

// Optimizer correctness: given enough steps Adam lands on the grid optimum.
// The 1000-step budget itself is judged by the acceptance suite.
TEST(ScaleFit, LongerBudgetReachesGridOracle) {
  for (std::uint64_t seed : {4u, 5u}) {
    const testing::FitFixture f = fit_fixture(seed);
    FitOptions o;
    o.iterations = 6000;
    const FitReport r = fit_scale_weights(f.scales, f.target, o);
    EXPECT_LE(oracle_fit_loss(f, r.weights.w1, r.weights.w2), testing::grid_search_loss(f) + 1e-3) << seed;
  }
}

TEST(ScaleFit, BestCurveIsMonotone) {
  const FitReport r = fit_scale_weights(fit_fixture(7).scales, fit_fixture(7).target);
  for (std::size_t i = 1; i < r.best_curve.size(); ++i) EXPECT_LE(r.best_curve[i], r.best_curve[i - 1]);
  EXPECT_DOUBLE_EQ(r.final_loss, r.best_curve.back());
}

TEST(ScaleFit, IdenticalScalesStayAtInit) {
  const testing::FitFixture f = fit_fixture(8);
  Tensor same = f.scales;
  const std::size_t n = f.target.bits.size();
  for (std::size_t i = 0; i < n; ++i) same[i] = same[2 * n + i] = same[n + i];
  const FitReport r = fit_scale_weights(same, f.target);
  EXPECT_DOUBLE_EQ(r.weights.w1, 1.0 / 3);
  EXPECT_DOUBLE_EQ(r.weights.w2, 1.0 / 3);
}

TEST(ScaleFit, NonFiniteLogitsRaise) {
  testing::FitFixture f = fit_fixture(9);
  f.scales[5] = std::nanf("");
  EXPECT_THROW(fit_scale_weights(f.scales, f.target), NumericError);
}

TEST(ScaleFit, ModelWeightsStayFrozen) {
  const testing::SyntheticModel m(1234);
  const std::uint64_t before = m.weights->checksum();
  const ObjectSamples fx = self_segmentation_fixture(7);
  const ReferenceConcept rc = register_concept(fx.images[0], fx.masks[0], m.encoder);
  const Segmenter seg(m.encoder, m.decoder, {.mode = SegmentMode::kMultiScale});
  FitOptions o;
  o.iterations = 100;
  const FitReport r = fit_scale_weights(rc, fx.images[0], fx.masks[0], seg, o);
  EXPECT_EQ(m.weights->checksum(), before);
  EXPECT_EQ(r.iterations, 100);
}

}  // namespace
}  // namespace pseg
