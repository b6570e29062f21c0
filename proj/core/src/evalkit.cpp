#include "pseg/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pseg/errors.hpp"

namespace pseg {

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ArgumentError(std::string(op) + ": masks differ in shape (" + std::to_string(a.width) +
                        "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                        std::to_string(b.height) + ")");
  }
}

double set_iou(const Mask& a, const Mask& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] && b.bits[i];
    uni += a.bits[i] || b.bits[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask erode4(const Mask& m) {
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      out.at(x, y) = m.at(x, y) && x > 0 && y > 0 && x + 1 < m.width && y + 1 < m.height &&
                     m.at(x - 1, y) && m.at(x + 1, y) && m.at(x, y - 1) && m.at(x, y + 1);
    }
  }
  return out;
}

Mask dilate4(const Mask& m) {
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      out.at(x, y) = m.at(x, y) || (x > 0 && m.at(x - 1, y)) || (x + 1 < m.width && m.at(x + 1, y)) ||
                     (y > 0 && m.at(x, y - 1)) || (y + 1 < m.height && m.at(x, y + 1));
    }
  }
  return out;
}

}  // namespace

double miou(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "miou");
  return set_iou(pred, gt);
}

int band_width(int width, int height, double frac) {
  const double diag = std::sqrt(static_cast<double>(width) * width + static_cast<double>(height) * height);
  return std::max(1, static_cast<int>(std::lround(frac * diag)));
}

Mask boundary_band(const Mask& mask, int depth) {
  Mask eroded = mask;
  for (int i = 0; i < depth; ++i) eroded = erode4(eroded);
  Mask band(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) band.bits[i] = mask.bits[i] && !eroded.bits[i];
  return band;
}

double boundary_iou(const Mask& pred, const Mask& gt, double d_frac) {
  require_same_shape(pred, gt, "boundary_iou");
  if (!(d_frac >= 0.0)) throw ArgumentError("boundary_iou: d_frac must be >= 0");
  const int d = band_width(gt.width, gt.height, d_frac);
  return set_iou(boundary_band(pred, d), boundary_band(gt, d));
}

double boundary_f_measure(const Mask& pred, const Mask& gt, double d_frac) {
  require_same_shape(pred, gt, "boundary_f_measure");
  const Mask bp = boundary_band(pred, 1);
  const Mask bg = boundary_band(gt, 1);
  const std::size_t np = bp.count(), ng = bg.count();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const int d = band_width(gt.width, gt.height, d_frac);
  Mask tol_p = bp, tol_g = bg;
  for (int i = 0; i < d; ++i) {
    tol_p = dilate4(tol_p);
    tol_g = dilate4(tol_g);
  }
  std::size_t hit_p = 0, hit_g = 0;
  for (std::size_t i = 0; i < bp.bits.size(); ++i) {
    hit_p += bp.bits[i] && tol_g.bits[i];
    hit_g += bg.bits[i] && tol_p.bits[i];
  }
  const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
  const double recall = static_cast<double>(hit_g) / static_cast<double>(ng);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

namespace {

ObjectScore evaluate_object(const ObjectSamples& obj, SegmentationMethod& method,
                            const EvalOptions& options) {
  const auto ref = static_cast<std::size_t>(options.reference_index);
  method.prepare(obj.images[ref], obj.masks[ref]);
  ObjectScore score;
  score.name = obj.name;
  // Video frames are consumed in order starting right after the reference.
  for (std::size_t i = 0; i < obj.images.size(); ++i) {
    if (i == ref || (options.video && i < ref)) continue;
    const Mask pred = method.predict(obj.images[i]);
    if (!pred.same_shape(obj.masks[i])) {
      throw ArgumentError("method returned a " + std::to_string(pred.width) + "x" +
                          std::to_string(pred.height) + " mask for " + obj.name + "/" + obj.files[i]);
    }
    SampleScore s;
    s.file = obj.files[i];
    s.iou = miou(pred, obj.masks[i]);
    s.biou = boundary_iou(pred, obj.masks[i], options.biou_frac);
    if (options.video) {
      s.j = s.iou;
      s.f = boundary_f_measure(pred, obj.masks[i], options.f_frac);
    }
    score.samples.push_back(s);
  }
  const double n = static_cast<double>(std::max<std::size_t>(score.samples.size(), 1));
  for (const auto& s : score.samples) {
    score.miou += s.iou / n;
    score.biou += s.biou / n;
    score.j += s.j / n;
    score.f += s.f / n;
  }
  score.jf = 0.5 * (score.j + score.f);
  return score;
}

}  // namespace

EvalReport evaluate_objects(const std::vector<ObjectSamples>& objects, const MethodFactory& factory,
                            const EvalOptions& options) {
  if (objects.empty()) throw DatasetError("dataset has no objects");
  for (const auto& o : objects) {
    if (o.images.size() < 2 || o.images.size() != o.masks.size()) {
      throw DatasetError("object '" + o.name + "' needs >= 2 image/mask pairs");
    }
    if (options.reference_index < 0 ||
        static_cast<std::size_t>(options.reference_index) >= o.images.size()) {
      throw DatasetError("object '" + o.name + "' has no pair at reference index " +
                         std::to_string(options.reference_index));
    }
  }
  EvalReport report;
  report.video = options.video;
  report.config = options.config;
  report.objects.resize(objects.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < objects.size(); i = next++) {
      try {
        auto method = factory();
        report.objects[i] = evaluate_object(objects[i], *method, options);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::clamp(options.jobs, 1, static_cast<int>(objects.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  const double n = static_cast<double>(report.objects.size());
  for (const auto& o : report.objects) {
    report.miou += o.miou / n;
    report.biou += o.biou / n;
    report.j += o.j / n;
    report.f += o.f / n;
    report.jf += o.jf / n;
  }
  return report;
}

EvalReport evaluate_dataset(const DatasetSpec& spec, const MethodFactory& factory, EvalOptions options) {
  options.reference_index = spec.reference_index;
  return evaluate_objects(load_dataset(spec), factory, options);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["video"] = video;
  j["config"] = config;
  nlohmann::ordered_json overall;
  overall["miou"] = miou;
  overall["biou"] = biou;
  if (video) {
    overall["j"] = this->j;
    overall["f"] = f;
    overall["jf"] = jf;
  }
  j["overall"] = overall;
  auto& objs = j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : objects) {
    nlohmann::ordered_json jo;
    jo["name"] = o.name;
    jo["miou"] = o.miou;
    jo["biou"] = o.biou;
    if (video) {
      jo["j"] = o.j;
      jo["f"] = o.f;
      jo["jf"] = o.jf;
    }
    auto& samples = jo["samples"] = nlohmann::ordered_json::array();
    for (const auto& s : o.samples) {
      nlohmann::ordered_json js;
      js["file"] = s.file;
      js["iou"] = s.iou;
      js["biou"] = s.biou;
      if (video) {
        js["j"] = s.j;
        js["f"] = s.f;
      }
      samples.push_back(js);
    }
    objs.push_back(jo);
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::size_t width = 7;
  for (const auto& o : objects) width = std::max(width, o.name.size());
  const int w = static_cast<int>(width);
  if (video) {
    std::snprintf(line, sizeof(line), "%-*s  %6s  %6s  %6s\n", w, "object", "J&F", "J", "F");
    os << line;
    for (const auto& o : objects) {
      std::snprintf(line, sizeof(line), "%-*s  %6.1f  %6.1f  %6.1f\n", w, o.name.c_str(),
                    100 * o.jf, 100 * o.j, 100 * o.f);
      os << line;
    }
    std::snprintf(line, sizeof(line), "%-*s  %6.1f  %6.1f  %6.1f\n", w, "overall", 100 * jf,
                  100 * j, 100 * f);
  } else {
    std::snprintf(line, sizeof(line), "%-*s  %6s  %6s\n", w, "object", "mIoU", "bIoU");
    os << line;
    for (const auto& o : objects) {
      std::snprintf(line, sizeof(line), "%-*s  %6.1f  %6.1f\n", w, o.name.c_str(), 100 * o.miou,
                    100 * o.biou);
      os << line;
    }
    std::snprintf(line, sizeof(line), "%-*s  %6.1f  %6.1f\n", w, "overall", 100 * miou, 100 * biou);
  }
  os << line;
  return os.str();
}

}  // namespace pseg
