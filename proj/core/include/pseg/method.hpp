#pragma once

#include <optional>

#include "pseg/evalkit.hpp"
#include "pseg/pipeline.hpp"

namespace pseg {

/// Adapts Segmenter to the evaluation harness. In multi-scale mode prepare()
/// also fits the scale weights on the reference pair.
class PersonalizedMethod final : public SegmentationMethod {
 public:
  PersonalizedMethod(const ImageEncoder& encoder, const MaskDecoder& decoder, SegmentOptions options,
                     FitOptions fit = {}, bool propagate = false);

  void prepare(const Image& reference, const Mask& reference_mask) override;
  Mask predict(const Image& image) override;

  const ReferenceConcept& learned() const { return *concept_; }
  const std::optional<FitReport>& fit_report() const { return fit_report_; }

 private:
  Segmenter segmenter_;
  FitOptions fit_;
  bool propagate_;
  std::optional<ReferenceConcept> concept_;
  std::optional<FitReport> fit_report_;
};

}  // namespace pseg
