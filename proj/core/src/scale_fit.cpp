#include <chrono>
#include <cmath>

#include "pseg/errors.hpp"
#include "pseg/pipeline.hpp"

namespace pseg {

ScaleFitObjective::ScaleFitObjective(const Tensor& scales, const Mask& target, double dice_smooth)
    : smooth_(dice_smooth) {
  if (scales.rank() != 3 || scales.dim(0) != static_cast<std::size_t>(kNumMaskTokens)) {
    throw ArgumentError("scale fit: expected (3, H, W) logits, got " + shape_str(scales.dims()));
  }
  if (scales.dim(1) != static_cast<std::size_t>(target.height) ||
      scales.dim(2) != static_cast<std::size_t>(target.width)) {
    throw ArgumentError("scale fit: target mask does not match logit resolution");
  }
  const auto n = target.bits.size();
  const auto copy = [&](std::size_t k, std::vector<double>& dst) {
    const auto r = scales.row(k);
    dst.assign(r.begin(), r.end());
  };
  copy(0, m1_);
  copy(1, m2_);
  copy(2, m3_);
  target_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    target_[i] = target.bits[i] ? 1.0 : 0.0;
    target_sum_ += target_[i];
  }
}

double ScaleFitObjective::loss(const ScaleWeights& w, std::array<double, 2>* grad) const {
  const std::size_t n = target_.size();
  const double w3 = w.w3();
  std::vector<double> prob(grad ? n : 0);
  double bce = 0.0, inter = 0.0, psum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = w.w1 * m1_[i] + w.w2 * m2_[i] + w3 * m3_[i];
    const double g = target_[i];
    bce += std::max(x, 0.0) - x * g + std::log1p(std::exp(-std::abs(x)));
    const double p = 1.0 / (1.0 + std::exp(-x));
    inter += p * g;
    psum += p;
    if (grad) prob[i] = p;
  }
  const double denom = psum + target_sum_ + smooth_;
  const double dice = 1.0 - (2.0 * inter + smooth_) / denom;
  const double total = bce / static_cast<double>(n) + dice;

  if (grad) {
    double g1 = 0.0, g2 = 0.0;
    const double num = 2.0 * inter + smooth_;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = prob[i], g = target_[i];
      const double d_dice_dp = -(2.0 * g * denom - num) / (denom * denom);
      const double d_dx = (p - g) / static_cast<double>(n) + d_dice_dp * p * (1.0 - p);
      g1 += d_dx * (m1_[i] - m3_[i]);
      g2 += d_dx * (m2_[i] - m3_[i]);
    }
    (*grad)[0] = g1;
    (*grad)[1] = g2;
  }
  return total;
}

FitReport fit_scale_weights(const Tensor& scales, const Mask& target, const FitOptions& options) {
  if (options.iterations < 0 || !(options.learning_rate > 0.0)) {
    throw ArgumentError("scale fit: iterations must be >= 0 and learning rate > 0");
  }
  const auto start = std::chrono::steady_clock::now();
  const ScaleFitObjective objective(scales, target, options.dice_smooth);

  FitReport report;
  ScaleWeights w;
  std::array<double, 2> m{0.0, 0.0}, v{0.0, 0.0}, grad{};
  double best = objective.loss(w, &grad);
  if (!std::isfinite(best)) throw NumericError("scale fit: non-finite loss at initialization");
  report.weights = w;
  report.loss_curve.reserve(options.iterations + 1);
  report.loss_curve.push_back(best);
  report.best_curve.push_back(best);

  double b1t = 1.0, b2t = 1.0;
  for (int it = 1; it <= options.iterations; ++it) {
    b1t *= options.beta1;
    b2t *= options.beta2;
    for (int k = 0; k < 2; ++k) {
      m[k] = options.beta1 * m[k] + (1.0 - options.beta1) * grad[k];
      v[k] = options.beta2 * v[k] + (1.0 - options.beta2) * grad[k] * grad[k];
    }
    const double lr_t = options.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    w.w1 -= lr_t * m[0] / (std::sqrt(v[0]) + options.epsilon);
    w.w2 -= lr_t * m[1] / (std::sqrt(v[1]) + options.epsilon);

    const double loss = objective.loss(w, &grad);
    if (!std::isfinite(loss) || !std::isfinite(grad[0]) || !std::isfinite(grad[1])) {
      throw NumericError("scale fit: non-finite loss at iteration " + std::to_string(it) +
                         " (w1=" + std::to_string(w.w1) + ", w2=" + std::to_string(w.w2) + ")");
    }
    report.loss_curve.push_back(loss);
    if (loss < best) {
      best = loss;
      report.weights = w;
    }
    report.best_curve.push_back(best);
  }
  report.iterations = options.iterations;
  report.final_loss = best;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

FitReport fit_scale_weights(const ReferenceConcept& ref_concept, const Image& reference,
                            const Mask& reference_mask, const Segmenter& segmenter,
                            const FitOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const FeatureMap features = segmenter.encoder().encode(reference);
  const MaskLogits logits = segmenter.initial_logits(ref_concept, features);
  FitReport report = fit_scale_weights(logits.scales, reference_mask, options);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace pseg
