#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pseg/concept.hpp"
#include "pseg/decoder.hpp"
#include "pseg/encoder.hpp"
#include "pseg/image.hpp"

namespace pseg {

enum class SegmentMode {
  /// Single mask from one scale token (index 0, "whole", by default).
  kTrainingFree,
  /// All three scales fused with ScaleWeights.
  kMultiScale,
};

/// (w1, w2); the third weight is 1 - w1 - w2. No sign or simplex constraint.
struct ScaleWeights {
  double w1 = 1.0 / 3.0;
  double w2 = 1.0 / 3.0;
  double w3() const { return 1.0 - w1 - w2; }
  friend bool operator==(const ScaleWeights&, const ScaleWeights&) = default;
};

/// w1 * m1 + w2 * m2 + (1 - w1 - w2) * m3, per pixel.
Tensor fuse_scales(const Tensor& m1, const Tensor& m2, const Tensor& m3, const ScaleWeights& w);
/// Same over a stacked (3, H, W) tensor.
Tensor fuse_scales(const Tensor& scales, const ScaleWeights& w);

/// Pixels with logit > 0.
Mask threshold_logits(const Tensor& logits);

/// Tight inclusive box around the foreground, nullopt when empty.
std::optional<Box> bounding_box(const Mask& mask);

/// What a decoder call is prompted with during refinement.
struct DecodeRequest {
  LocationPrior points;
  std::optional<Box> box;
  /// Previous image-resolution logits fed back as a mask prompt, if any.
  const Tensor* prior_logits = nullptr;
};

/// Decoder as seen by the refinement cascade. The production implementation
/// is GuidedDecoder; tests substitute stubs.
class PromptableDecoder {
 public:
  virtual ~PromptableDecoder() = default;
  virtual MaskLogits decode(const DecodeRequest& request) const = 0;
};

/// Binds a MaskDecoder to one test image, the concept's global embedding and
/// the confidence-derived attention bias.
class GuidedDecoder final : public PromptableDecoder {
 public:
  GuidedDecoder(const MaskDecoder& decoder, const FeatureMap& image, Tensor target,
                AttentionBias bias);
  MaskLogits decode(const DecodeRequest& request) const override;

 private:
  const MaskDecoder& decoder_;
  const FeatureMap& image_;
  Tensor target_;
  AttentionBias bias_;
};

/// Turns three-scale logits into the single map that gets thresholded.
struct ScaleSelection {
  SegmentMode mode = SegmentMode::kTrainingFree;
  int single_index = 0;
  ScaleWeights weights;

  Tensor select(const MaskLogits& logits) const;
};

struct RefinementStage {
  std::string name;
  Mask mask;
  std::optional<Box> box;
};

struct SegmentationResult {
  Tensor logits;  // (H, W) fused or selected
  Mask mask;      // logits > 0
  Tensor scales;  // (3, H, W)
  LocationPrior prior;
  ScaleSelection selection;
  std::vector<RefinementStage> trace;
  std::vector<std::string> warnings;
};

/// Two extra decoder passes: points + mask prompt, then points + box of that
/// mask + mask prompt. An empty initial mask is returned as is.
SegmentationResult post_refine(const SegmentationResult& initial, const LocationPrior& prior,
                               const PromptableDecoder& decoder);

struct SegmentOptions {
  float alpha = 1.0f;
  SegmentMode mode = SegmentMode::kTrainingFree;
  bool refine = true;
  int single_mask_index = 0;
  /// Used in multi-scale mode when the concept carries no fitted weights.
  ScaleWeights weights;
};

class Segmenter {
 public:
  Segmenter(const ImageEncoder& encoder, const MaskDecoder& decoder, SegmentOptions options);

  SegmentationResult segment(const ReferenceConcept& ref_concept, const Image& image) const;
  SegmentationResult segment(const ReferenceConcept& ref_concept, const FeatureMap& features) const;

  /// First decoder pass only (no refinement), all three scales.
  MaskLogits initial_logits(const ReferenceConcept& ref_concept, const FeatureMap& features,
                            LocationPrior* prior_out = nullptr) const;

  ScaleSelection selection_for(const ReferenceConcept& ref_concept) const;

  const ImageEncoder& encoder() const noexcept { return encoder_; }
  const MaskDecoder& decoder() const noexcept { return decoder_; }
  const SegmentOptions& options() const noexcept { return options_; }

 private:
  const ImageEncoder& encoder_;
  const MaskDecoder& decoder_;
  SegmentOptions options_;
};

/// Segments every frame against the frame-0 concept. With `propagate`, each
/// non-empty prediction re-registers the concept for the next frame.
std::vector<SegmentationResult> segment_video(const ReferenceConcept& ref_concept,
                                              std::span<const Image> frames,
                                              const Segmenter& segmenter, bool propagate);

// Scale-weight fitting ------------------------------------------------------

struct FitOptions {
  int iterations = 1000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dice_smooth = 1.0;
};

struct FitReport {
  ScaleWeights weights;  // best-so-far
  std::vector<double> loss_curve;
  std::vector<double> best_curve;
  int iterations = 0;
  double seconds = 0.0;
  double final_loss = 0.0;
};

/// BCE + soft Dice between sigmoid(fused logits) and a binary target, with
/// its analytic gradient in (w1, w2). Logits are cached because the model is
/// frozen.
class ScaleFitObjective {
 public:
  ScaleFitObjective(const Tensor& scales, const Mask& target, double dice_smooth = 1.0);

  double loss(const ScaleWeights& w, std::array<double, 2>* grad = nullptr) const;

 private:
  std::vector<double> m1_, m2_, m3_;
  std::vector<double> target_;
  double target_sum_ = 0.0;
  double smooth_;
};

/// Adam over (w1, w2) from (1/3, 1/3). Throws NumericError on a non-finite loss.
FitReport fit_scale_weights(const Tensor& scales, const Mask& target, const FitOptions& options = {});

/// Fits on the reference pair itself, treating its mask as ground truth.
FitReport fit_scale_weights(const ReferenceConcept& ref_concept, const Image& reference,
                            const Mask& reference_mask, const Segmenter& segmenter,
                            const FitOptions& options = {});

}  // namespace pseg
