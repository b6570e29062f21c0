#include "pseg/result_io.hpp"

#include <fstream>

#include <json.hpp>

#include "pseg/errors.hpp"
#include "pseg/evalkit.hpp"

namespace fs = std::filesystem;

namespace pseg {

std::string mode_name(SegmentMode mode) {
  return mode == SegmentMode::kMultiScale ? "persam-f" : "persam";
}

SegmentMode parse_mode(const std::string& name) {
  if (name == "persam") return SegmentMode::kTrainingFree;
  if (name == "persam-f") return SegmentMode::kMultiScale;
  throw ArgumentError("unknown mode '" + name + "' (expected persam or persam-f)");
}

namespace {

nlohmann::ordered_json point_json(const PixelPoint& p, float score, std::pair<int, int> cell) {
  nlohmann::ordered_json j;
  j["x"] = p.x;
  j["y"] = p.y;
  j["score"] = score;
  j["cell"] = {cell.first, cell.second};
  return j;
}

}  // namespace

std::string result_sidecar_json(const SegmentationResult& result, const SegmentOptions& options,
                                const std::string& image_id, const Mask* ground_truth) {
  nlohmann::ordered_json j;
  j["image"] = image_id;
  j["mode"] = mode_name(result.selection.mode);
  j["alpha"] = options.alpha;
  j["refine"] = options.refine;
  j["prior"] = {{"positive", point_json(result.prior.positive, result.prior.positive_score,
                                        result.prior.positive_cell)},
                {"negative", point_json(result.prior.negative, result.prior.negative_score,
                                        result.prior.negative_cell)}};
  if (result.selection.mode == SegmentMode::kMultiScale) {
    const ScaleWeights& w = result.selection.weights;
    j["weights"] = {w.w1, w.w2, w.w3()};
  } else {
    j["mask_index"] = result.selection.single_index;
  }
  j["foreground_pixels"] = result.mask.count();
  auto& stages = j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : result.trace) {
    nlohmann::ordered_json js;
    js["name"] = s.name;
    js["foreground_pixels"] = s.mask.count();
    if (s.box) js["box"] = {s.box->x0, s.box->y0, s.box->x1, s.box->y1};
    if (ground_truth != nullptr) js["iou"] = miou(s.mask, *ground_truth);
    stages.push_back(js);
  }
  if (ground_truth != nullptr) j["iou"] = miou(result.mask, *ground_truth);
  j["warnings"] = result.warnings;
  return j.dump(2) + "\n";
}

fs::path write_result(const fs::path& stem, const SegmentationResult& result,
                      const SegmentOptions& options, const std::string& image_id,
                      const Mask* ground_truth) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  fs::path png = stem;
  png += ".png";
  fs::path sidecar = stem;
  sidecar += ".json";
  write_png_mask(png, result.mask);
  std::ofstream out(sidecar, std::ios::binary);
  out << result_sidecar_json(result, options, image_id, ground_truth);
  if (!out) throw IoError("cannot write " + sidecar.string());
  return png;
}

void write_concept(const fs::path& path, const ReferenceConcept& ref_concept) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  concept_to_bundle(ref_concept).write_file(path);
}

ReferenceConcept read_concept(const fs::path& path) {
  return concept_from_bundle(TensorBundle::read_file(path));
}

}  // namespace pseg
