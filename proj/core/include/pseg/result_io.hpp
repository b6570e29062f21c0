#pragma once

#include <filesystem>
#include <string>

#include "pseg/concept.hpp"
#include "pseg/pipeline.hpp"

namespace pseg {

std::string mode_name(SegmentMode mode);
/// "persam" or "persam-f"; throws ArgumentError otherwise.
SegmentMode parse_mode(const std::string& name);

/// JSON sidecar describing one segmentation: prior points, the scale
/// selection, alpha, warnings and, when `ground_truth` is given, the IoU
/// after each refinement stage.
std::string result_sidecar_json(const SegmentationResult& result, const SegmentOptions& options,
                                const std::string& image_id, const Mask* ground_truth = nullptr);

/// Writes `<stem>.png` (mask) and `<stem>.json` (sidecar) and returns the
/// PNG path.
std::filesystem::path write_result(const std::filesystem::path& stem, const SegmentationResult& result,
                                   const SegmentOptions& options, const std::string& image_id,
                                   const Mask* ground_truth = nullptr);

void write_concept(const std::filesystem::path& path, const ReferenceConcept& ref_concept);
ReferenceConcept read_concept(const std::filesystem::path& path);

}  // namespace pseg
