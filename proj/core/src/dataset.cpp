#include <algorithm>
#include <system_error>

#include "pseg/errors.hpp"
#include "pseg/evalkit.hpp"
#include "pseg/method.hpp"

namespace fs = std::filesystem;

namespace pseg {

std::vector<ObjectSamples> load_dataset(const DatasetSpec& spec) {
  std::error_code ec;
  if (!fs::is_directory(spec.root, ec)) {
    throw DatasetError("dataset root is not a directory: " + spec.root.string());
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(spec.root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DatasetError("dataset root has no object directories: " + spec.root.string());

  std::vector<ObjectSamples> objects;
  for (const auto& dir : dirs) {
    ObjectSamples obj;
    obj.name = dir.filename().string();
    const fs::path images = dir / "images";
    const fs::path masks = dir / "masks";
    if (!fs::is_directory(images) || !fs::is_directory(masks)) {
      throw DatasetError("object '" + obj.name + "': missing images/ or masks/ directory");
    }
    for (const auto& entry : fs::directory_iterator(images)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        obj.files.push_back(entry.path().filename().string());
      }
    }
    std::sort(obj.files.begin(), obj.files.end());
    if (obj.files.size() < 2) {
      throw DatasetError("object '" + obj.name + "': needs >= 2 images, found " +
                         std::to_string(obj.files.size()));
    }
    for (const auto& file : obj.files) {
      const fs::path mask_path = masks / file;
      if (!fs::is_regular_file(mask_path)) {
        throw DatasetError("object '" + obj.name + "': no mask for image '" + file + "'");
      }
      try {
        obj.images.push_back(read_png_rgb(images / file));
        obj.masks.push_back(read_png_mask(mask_path));
      } catch (const IoError& e) {
        throw DatasetError("object '" + obj.name + "', file '" + file + "': " + e.what());
      }
      if (obj.images.back().width != obj.masks.back().width ||
          obj.images.back().height != obj.masks.back().height) {
        throw DatasetError("object '" + obj.name + "', file '" + file +
                           "': mask size differs from image size");
      }
    }
    if (spec.reference_index < 0 ||
        static_cast<std::size_t>(spec.reference_index) >= obj.files.size()) {
      throw DatasetError("object '" + obj.name + "': reference index " +
                         std::to_string(spec.reference_index) + " out of range");
    }
    if (obj.masks[static_cast<std::size_t>(spec.reference_index)].empty()) {
      throw DatasetError("object '" + obj.name + "', file '" +
                         obj.files[static_cast<std::size_t>(spec.reference_index)] +
                         "': reference mask is empty");
    }
    objects.push_back(std::move(obj));
  }
  return objects;
}

void write_dataset(const fs::path& root, const std::vector<ObjectSamples>& objects) {
  for (const auto& obj : objects) {
    fs::create_directories(root / obj.name / "images");
    fs::create_directories(root / obj.name / "masks");
    for (std::size_t i = 0; i < obj.files.size(); ++i) {
      write_png_rgb(root / obj.name / "images" / obj.files[i], obj.images[i]);
      write_png_mask(root / obj.name / "masks" / obj.files[i], obj.masks[i]);
    }
  }
}

PersonalizedMethod::PersonalizedMethod(const ImageEncoder& encoder, const MaskDecoder& decoder,
                                       SegmentOptions options, FitOptions fit, bool propagate)
    : segmenter_(encoder, decoder, options), fit_(fit), propagate_(propagate) {}

void PersonalizedMethod::prepare(const Image& reference, const Mask& reference_mask) {
  concept_ = register_concept(reference, reference_mask, segmenter_.encoder());
  fit_report_.reset();
  if (segmenter_.options().mode == SegmentMode::kMultiScale) {
    fit_report_ = fit_scale_weights(*concept_, reference, reference_mask, segmenter_, fit_);
    concept_->scale_weights = std::pair{fit_report_->weights.w1, fit_report_->weights.w2};
  }
}

Mask PersonalizedMethod::predict(const Image& image) {
  if (!concept_) throw ArgumentError("predict called before prepare");
  const FeatureMap features = segmenter_.encoder().encode(image);
  SegmentationResult result = segmenter_.segment(*concept_, features);
  if (propagate_) {
    try {
      ReferenceConcept next = register_concept(features, result.mask, concept_->reference_id);
      next.scale_weights = concept_->scale_weights;
      concept_ = std::move(next);
    } catch (const DegenerateMaskError&) {
    }
  }
  return std::move(result.mask);
}

}  // namespace pseg
