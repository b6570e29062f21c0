#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pseg/image.hpp"

namespace pseg {

/// |pred & gt| / |pred | gt|; 1.0 when both are empty.
double miou(const Mask& pred, const Mask& gt);

/// Band half-width in pixels: max(1, round(frac * image diagonal)).
int band_width(int width, int height, double frac);

/// Pixels of `mask` removed by `depth` rounds of 4-connected erosion, with
/// everything outside the raster counted as background.
Mask boundary_band(const Mask& mask, int depth);

/// IoU of the two boundary bands; 1.0 when both masks are empty.
double boundary_iou(const Mask& pred, const Mask& gt, double d_frac = 0.02);

/// Boundary F-measure: one-pixel contours matched within a 4-connected
/// dilation of `d_frac` * diagonal pixels.
double boundary_f_measure(const Mask& pred, const Mask& gt, double d_frac = 0.008);

/// One object directory: images/ and masks/ with identical file names.
struct ObjectSamples {
  std::string name;
  std::vector<std::string> files;
  std::vector<Image> images;
  std::vector<Mask> masks;
};

struct DatasetSpec {
  std::filesystem::path root;
  int reference_index = 0;
};

/// Loads root/<object>/{images,masks}/*.png sorted by name. Throws
/// DatasetError naming the object and file on any layout problem.
std::vector<ObjectSamples> load_dataset(const DatasetSpec& spec);
void write_dataset(const std::filesystem::path& root, const std::vector<ObjectSamples>& objects);

/// Something that can be taught from one pair and then asked for masks.
/// Video methods receive frames in order and may keep state.
class SegmentationMethod {
 public:
  virtual ~SegmentationMethod() = default;
  virtual void prepare(const Image& reference, const Mask& reference_mask) = 0;
  virtual Mask predict(const Image& image) = 0;
};
using MethodFactory = std::function<std::unique_ptr<SegmentationMethod>()>;

struct EvalOptions {
  bool video = false;
  int reference_index = 0;
  double biou_frac = 0.02;
  double f_frac = 0.008;
  int jobs = 1;
  /// Echoed verbatim into the report.
  std::map<std::string, std::string> config;
};

struct SampleScore {
  std::string file;
  double iou = 0.0;
  double biou = 0.0;
  double j = 0.0;
  double f = 0.0;
};

struct ObjectScore {
  std::string name;
  double miou = 0.0;
  double biou = 0.0;
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
  std::vector<SampleScore> samples;
};

struct EvalReport {
  bool video = false;
  std::vector<ObjectScore> objects;
  double miou = 0.0;
  double biou = 0.0;
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
  std::map<std::string, std::string> config;

  std::string to_json() const;
  std::string to_table() const;
};

EvalReport evaluate_objects(const std::vector<ObjectSamples>& objects, const MethodFactory& factory,
                            const EvalOptions& options);
EvalReport evaluate_dataset(const DatasetSpec& spec, const MethodFactory& factory,
                            EvalOptions options);

}  // namespace pseg
