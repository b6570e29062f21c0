#pragma once

#include <optional>
#include <string>

#include "pseg/bundle.hpp"
#include "pseg/encoder.hpp"
#include "pseg/image.hpp"
#include "pseg/tensor.hpp"

namespace pseg {

/// A registered one-shot target.
struct ReferenceConcept {
  /// (n, c) unit-norm foreground cell features, row-major cell order.
  Tensor locals;
  /// (c) plain mean of the locals; not renormalized.
  Tensor global;
  std::string reference_id;
  /// Fitted scale weights (w1, w2), present after fine-tuning.
  std::optional<std::pair<double, double>> scale_weights;

  std::size_t n() const { return locals.empty() ? 0 : locals.dim(0); }
  std::size_t channels() const { return locals.empty() ? 0 : locals.dim(1); }
};

struct ConfidenceMap {
  /// (h, w) mean cosine similarity, every value in [-1, 1].
  Tensor scores;
  std::string image_id;
  std::string concept_id;
};

struct PixelPoint {
  float x = 0.0f;
  float y = 0.0f;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct LocationPrior {
  PixelPoint positive;
  PixelPoint negative;
  float positive_score = 0.0f;
  float negative_score = 0.0f;
  /// Cell indices (row, col) behind the two points.
  std::pair<int, int> positive_cell{0, 0};
  std::pair<int, int> negative_cell{0, 0};
};

/// One unit-norm row per foreground cell of `mask_feat` (h, w, 1), in
/// row-major order. Throws DegenerateMaskError on an empty mask.
Tensor extract_local_features(const FeatureMap& reference, const Tensor& mask_feat);

/// Mean over locals of the cosine between each local and each test cell.
ConfidenceMap confidence_map(const ReferenceConcept& ref_concept, const FeatureMap& test);

/// Argmax (positive) and argmin (negative) cells, ties to the smallest
/// row-major index, mapped to cell-centre pixels.
LocationPrior select_location_prior(const ConfidenceMap& map, int stride);

/// Arithmetic mean of the local feature rows.
Tensor target_embedding(const Tensor& locals);

ReferenceConcept register_concept(const Image& image, const Mask& mask,
                                  const ImageEncoder& encoder);
/// Same, reusing an already-encoded reference feature map.
ReferenceConcept register_concept(const FeatureMap& features, const Mask& mask,
                                  std::string reference_id);

/// Tensors: "concept:locals" (n, c), "concept:global" (1, c), optional
/// "concept:scale_weights" (2), and the reference id as the single-element
/// tensor "concept:ref:<id>".
TensorBundle concept_to_bundle(const ReferenceConcept& ref_concept);
ReferenceConcept concept_from_bundle(const TensorBundle& bundle);

}  // namespace pseg
