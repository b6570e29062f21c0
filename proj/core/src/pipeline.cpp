#include "pseg/pipeline.hpp"

#include <algorithm>

#include "pseg/errors.hpp"

namespace pseg {

Tensor fuse_scales(const Tensor& m1, const Tensor& m2, const Tensor& m3, const ScaleWeights& w) {
  if (m1.dims() != m2.dims() || m1.dims() != m3.dims()) {
    throw ArgumentError("fuse_scales: shapes differ " + shape_str(m1.dims()) + ", " +
                        shape_str(m2.dims()) + ", " + shape_str(m3.dims()));
  }
  Tensor out(m1.dims());
  const double w3 = w.w3();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(w.w1 * m1[i] + w.w2 * m2[i] + w3 * m3[i]);
  }
  return out;
}

Tensor fuse_scales(const Tensor& scales, const ScaleWeights& w) {
  if (scales.rank() != 3 || scales.dim(0) != static_cast<std::size_t>(kNumMaskTokens)) {
    throw ArgumentError("fuse_scales: expected (3, H, W), got " + shape_str(scales.dims()));
  }
  const Shape plane{scales.dim(1), scales.dim(2)};
  const auto slice = [&](std::size_t k) {
    const auto r = scales.row(k);
    return Tensor(plane, std::vector<float>(r.begin(), r.end()));
  };
  return fuse_scales(slice(0), slice(1), slice(2), w);
}

Mask threshold_logits(const Tensor& logits) {
  if (logits.rank() != 2) throw ArgumentError("threshold_logits: expected (H, W)");
  Mask m(static_cast<int>(logits.dim(1)), static_cast<int>(logits.dim(0)));
  for (std::size_t i = 0; i < logits.size(); ++i) m.bits[i] = logits[i] > 0.0f ? 1 : 0;
  return m;
}

std::optional<Box> bounding_box(const Mask& mask) {
  Box b{mask.width, mask.height, -1, -1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  }
  if (b.x1 < 0) return std::nullopt;
  return b;
}

GuidedDecoder::GuidedDecoder(const MaskDecoder& decoder, const FeatureMap& image, Tensor target,
                             AttentionBias bias)
    : decoder_(decoder), image_(image), target_(std::move(target)), bias_(std::move(bias)) {}

MaskLogits GuidedDecoder::decode(const DecodeRequest& request) const {
  const PromptEncoder& pe = decoder_.prompt_encoder();
  const PromptTokens prompts =
      pe.encode_prompts(request.points, request.box, image_.image_w, image_.image_h);
  const Tensor tokens = semantic_prompt_tokens(target_, pe.mask_tokens(), prompts);
  if (request.prior_logits == nullptr) return decoder_.decode(image_, tokens, &bias_, nullptr);
  const Tensor low = bilinear_resize(*request.prior_logits, image_.h(), image_.w())
                         .reshaped({static_cast<std::size_t>(image_.h()),
                                    static_cast<std::size_t>(image_.w()), 1});
  return decoder_.decode(image_, tokens, &bias_, &low);
}

Tensor ScaleSelection::select(const MaskLogits& logits) const {
  if (mode == SegmentMode::kTrainingFree) return logits.scale(single_index);
  return fuse_scales(logits.scales, weights);
}

namespace {

SegmentationResult from_logits(const MaskLogits& logits, const ScaleSelection& selection,
                               const LocationPrior& prior) {
  SegmentationResult r;
  r.logits = selection.select(logits);
  r.mask = threshold_logits(r.logits);
  r.scales = logits.scales;
  r.prior = prior;
  r.selection = selection;
  return r;
}

}  // namespace

SegmentationResult post_refine(const SegmentationResult& initial, const LocationPrior& prior,
                               const PromptableDecoder& decoder) {
  if (initial.mask.empty()) {
    SegmentationResult r = initial;
    r.warnings.push_back("initial mask empty; refinement skipped");
    return r;
  }
  SegmentationResult step1 =
      from_logits(decoder.decode({prior, std::nullopt, &initial.logits}), initial.selection, prior);
  step1.trace = initial.trace;
  step1.warnings = initial.warnings;
  step1.trace.push_back({"mask", step1.mask, std::nullopt});

  const auto box = bounding_box(step1.mask);
  if (!box) {
    step1.warnings.push_back("mask-prompt refinement produced an empty mask; box step skipped");
    return step1;
  }
  SegmentationResult step2 =
      from_logits(decoder.decode({prior, box, &step1.logits}), initial.selection, prior);
  step2.trace = std::move(step1.trace);
  step2.warnings = std::move(step1.warnings);
  step2.trace.push_back({"mask+box", step2.mask, box});
  return step2;
}

Segmenter::Segmenter(const ImageEncoder& encoder, const MaskDecoder& decoder, SegmentOptions options)
    : encoder_(encoder), decoder_(decoder), options_(options) {
  if (options_.alpha < 0.0f) throw ArgumentError("segment: alpha must be >= 0");
  if (options_.single_mask_index < 0 || options_.single_mask_index >= kNumMaskTokens) {
    throw ArgumentError("segment: single mask index must be in [0, 3)");
  }
  if (encoder_.config().embed_dim != decoder_.config().embed_dim) {
    throw ConfigError("encoder and decoder embedding widths differ");
  }
}

ScaleSelection Segmenter::selection_for(const ReferenceConcept& ref_concept) const {
  ScaleSelection s;
  s.mode = options_.mode;
  s.single_index = options_.single_mask_index;
  s.weights = options_.weights;
  if (options_.mode == SegmentMode::kMultiScale && ref_concept.scale_weights) {
    s.weights = {ref_concept.scale_weights->first, ref_concept.scale_weights->second};
  }
  return s;
}

namespace {

struct FirstPass {
  ConfidenceMap confidence;
  LocationPrior prior;
  AttentionBias bias;
};

FirstPass prepare(const ReferenceConcept& ref_concept, const FeatureMap& features, float alpha) {
  FirstPass fp;
  fp.confidence = confidence_map(ref_concept, features);
  fp.prior = select_location_prior(fp.confidence, features.stride);
  // Cell-centre pixels can fall past the edge of a padded grid.
  fp.prior.positive.x = std::min(fp.prior.positive.x, static_cast<float>(features.image_w));
  fp.prior.positive.y = std::min(fp.prior.positive.y, static_cast<float>(features.image_h));
  fp.prior.negative.x = std::min(fp.prior.negative.x, static_cast<float>(features.image_w));
  fp.prior.negative.y = std::min(fp.prior.negative.y, static_cast<float>(features.image_h));
  fp.bias = AttentionBias::from_confidence(alpha, fp.confidence.scores, features.h(), features.w());
  return fp;
}

}  // namespace

MaskLogits Segmenter::initial_logits(const ReferenceConcept& ref_concept, const FeatureMap& features,
                                     LocationPrior* prior_out) const {
  const FirstPass fp = prepare(ref_concept, features, options_.alpha);
  if (prior_out) *prior_out = fp.prior;
  const GuidedDecoder dec(decoder_, features, ref_concept.global, fp.bias);
  return dec.decode({fp.prior, std::nullopt, nullptr});
}

SegmentationResult Segmenter::segment(const ReferenceConcept& ref_concept, const FeatureMap& features) const {
  const FirstPass fp = prepare(ref_concept, features, options_.alpha);
  const GuidedDecoder dec(decoder_, features, ref_concept.global, fp.bias);
  SegmentationResult r = from_logits(dec.decode({fp.prior, std::nullopt, nullptr}),
                                     selection_for(ref_concept), fp.prior);
  r.trace.push_back({"initial", r.mask, std::nullopt});
  if (fp.prior.positive_score == fp.prior.negative_score) {
    r.warnings.push_back("constant confidence map; location prior is arbitrary");
  }
  if (options_.refine) r = post_refine(r, fp.prior, dec);
  return r;
}

SegmentationResult Segmenter::segment(const ReferenceConcept& ref_concept, const Image& image) const {
  return segment(ref_concept, encoder_.encode(image));
}

std::vector<SegmentationResult> segment_video(const ReferenceConcept& ref_concept,
                                              std::span<const Image> frames,
                                              const Segmenter& segmenter, bool propagate) {
  std::vector<SegmentationResult> out;
  out.reserve(frames.size());
  ReferenceConcept current = ref_concept;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const FeatureMap features = segmenter.encoder().encode(frames[t]);
    out.push_back(segmenter.segment(current, features));
    if (!propagate || t + 1 == frames.size()) continue;
    try {
      ReferenceConcept next = register_concept(features, out.back().mask, current.reference_id);
      next.scale_weights = current.scale_weights;
      current = std::move(next);
    } catch (const DegenerateMaskError&) {
      out.back().warnings.push_back("prediction too small to propagate; keeping previous concept");
    }
  }
  return out;
}

}  // namespace pseg
