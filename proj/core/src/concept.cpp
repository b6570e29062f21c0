#include "pseg/concept.hpp"

#include <algorithm>

#include "pseg/errors.hpp"
#include "pseg/nn.hpp"

namespace pseg {

namespace {

constexpr const char* kRefPrefix = "concept:ref:";

}  // namespace

Tensor extract_local_features(const FeatureMap& reference, const Tensor& mask_feat) {
  const std::size_t h = reference.h(), w = reference.w(), c = reference.c();
  if (mask_feat.size() != h * w) {
    throw ArgumentError("extract_local_features: mask " + shape_str(mask_feat.dims()) +
                        " does not match feature grid " + shape_str(reference.grid.dims()));
  }
  std::vector<float> rows;
  std::size_t n = 0;
  for (std::size_t cell = 0; cell < h * w; ++cell) {
    if (mask_feat[cell] == 0.0f) continue;
    const float* src = reference.grid.data().data() + cell * c;
    rows.insert(rows.end(), src, src + c);
    ++n;
  }
  if (n == 0) throw DegenerateMaskError("reference mask has no foreground cells");
  return l2_normalize(Tensor({n, c}, std::move(rows)), 1);
}

Tensor target_embedding(const Tensor& locals) {
  if (locals.empty() || locals.rank() != 2) {
    throw ArgumentError("target_embedding: expected a non-empty (n, c) set of local features");
  }
  const std::size_t n = locals.dim(0), c = locals.dim(1);
  std::vector<double> acc(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) acc[k] += locals.at(i, k);
  }
  Tensor out({c});
  for (std::size_t k = 0; k < c; ++k) out[k] = static_cast<float>(acc[k] / static_cast<double>(n));
  return out;
}

ConfidenceMap confidence_map(const ReferenceConcept& ref_concept, const FeatureMap& test) {
  if (ref_concept.n() == 0) throw ArgumentError("confidence_map: concept has no local features");
  if (ref_concept.channels() != static_cast<std::size_t>(test.c())) {
    throw ArgumentError("confidence_map: concept has " + std::to_string(ref_concept.channels()) +
                        " channels, features have " + std::to_string(test.c()));
  }
  const std::size_t h = test.h(), w = test.w(), c = test.c();
  const Tensor cells = l2_normalize(test.grid.reshaped({h * w, c}), 1);
  const Tensor locals = l2_normalize(ref_concept.locals, 1);
  // (h*w, n) cosine matrix, then mean over the n locals.
  const Tensor sims = nn::matmul_nt(cells, locals);
  const std::size_t n = locals.dim(0);
  Tensor scores({h, w});
  for (std::size_t cell = 0; cell < h * w; ++cell) {
    double acc = 0.0;
    for (auto v : sims.row(cell)) acc += v;
    scores[cell] = std::clamp(static_cast<float>(acc / static_cast<double>(n)), -1.0f, 1.0f);
  }
  return ConfidenceMap{std::move(scores), "", ref_concept.reference_id};
}

LocationPrior select_location_prior(const ConfidenceMap& map, int stride) {
  const Tensor& s = map.scores;
  if (s.empty() || s.rank() != 2) throw ArgumentError("select_location_prior: empty map");
  if (stride <= 0) throw ArgumentError("select_location_prior: stride must be positive");
  std::size_t hi = 0, lo = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] > s[hi]) hi = i;
    if (s[i] < s[lo]) lo = i;
  }
  const std::size_t w = s.dim(1);
  const auto to_pixel = [&](std::size_t idx) {
    const auto r = static_cast<float>(idx / w), col = static_cast<float>(idx % w);
    return PixelPoint{(col + 0.5f) * stride, (r + 0.5f) * stride};
  };
  LocationPrior p;
  p.positive = to_pixel(hi);
  p.negative = to_pixel(lo);
  p.positive_score = s[hi];
  p.negative_score = s[lo];
  p.positive_cell = {static_cast<int>(hi / w), static_cast<int>(hi % w)};
  p.negative_cell = {static_cast<int>(lo / w), static_cast<int>(lo % w)};
  return p;
}

ReferenceConcept register_concept(const FeatureMap& features, const Mask& mask,
                                  std::string reference_id) {
  if (mask.height != features.image_h || mask.width != features.image_w) {
    throw ArgumentError("register_concept: mask is " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height) + " but image is " +
                        std::to_string(features.image_w) + "x" + std::to_string(features.image_h));
  }
  if (mask.empty()) throw DegenerateMaskError("reference mask is empty");
  const Tensor mask_feat = downsample_mask(mask, features.h(), features.w());
  ReferenceConcept ref_concept;
  ref_concept.locals = extract_local_features(features, mask_feat);
  ref_concept.global = target_embedding(ref_concept.locals);
  ref_concept.reference_id = std::move(reference_id);
  return ref_concept;
}

ReferenceConcept register_concept(const Image& image, const Mask& mask,
                                  const ImageEncoder& encoder) {
  return register_concept(encoder.encode(image), mask, content_hash(image));
}

TensorBundle concept_to_bundle(const ReferenceConcept& ref_concept) {
  if (ref_concept.n() == 0) throw ArgumentError("concept_to_bundle: empty concept");
  TensorBundle b;
  b.add("concept:locals", ref_concept.locals);
  b.add("concept:global", ref_concept.global.reshaped({1, ref_concept.global.size()}));
  if (ref_concept.scale_weights) {
    b.add("concept:scale_weights",
          Tensor({2}, {static_cast<float>(ref_concept.scale_weights->first),
                       static_cast<float>(ref_concept.scale_weights->second)}));
  }
  b.add(kRefPrefix + ref_concept.reference_id, Tensor({1}, 0.0f));
  return b;
}

ReferenceConcept concept_from_bundle(const TensorBundle& bundle) {
  ReferenceConcept ref_concept;
  ref_concept.locals = bundle.get("concept:locals");
  const Tensor& g = bundle.get("concept:global");
  if (ref_concept.locals.rank() != 2 || g.size() != ref_concept.locals.dim(1)) {
    throw ConfigError("concept bundle: locals/global shapes disagree");
  }
  ref_concept.global = g.reshaped({g.size()});
  if (bundle.contains("concept:scale_weights")) {
    const Tensor& w = bundle.get("concept:scale_weights");
    if (w.size() != 2) throw ConfigError("concept bundle: scale weights must hold 2 values");
    ref_concept.scale_weights = std::pair<double, double>{w[0], w[1]};
  }
  for (const auto& e : bundle.entries()) {
    if (e.name.rfind(kRefPrefix, 0) == 0) ref_concept.reference_id = e.name.substr(std::string(kRefPrefix).size());
  }
  return ref_concept;
}

}  // namespace pseg
