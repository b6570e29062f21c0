#include "pseg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pseg/errors.hpp"
#include "pseg/evalkit.hpp"
#include "pseg/method.hpp"
#include "pseg/model_config.hpp"
#include "pseg/result_io.hpp"
#include "pseg/synthetic.hpp"

namespace fs = std::filesystem;

namespace pseg::cli {

namespace {

constexpr const char* kBuiltin = "builtin";
constexpr const char* kConceptFile = "concept.pstb";

// Flags shared by every subcommand; unset ones fall back to the config file.
struct CommonFlags {
  std::string config;
  std::optional<std::string> weights;
  std::optional<std::string> model;
  std::optional<float> alpha;
  std::optional<std::string> mode;
  bool no_refine = false;
  std::optional<int> iters;
  std::optional<double> lr;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<int> mask_index;
  std::string out = "out";
};

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.weights) cfg.weights = *f.weights;
  if (f.model) cfg.model = *f.model;
  if (f.alpha) cfg.alpha = *f.alpha;
  if (f.mode) cfg.mode = *f.mode;
  if (f.no_refine) cfg.refine = false;
  if (f.iters) cfg.iters = *f.iters;
  if (f.lr) cfg.lr = *f.lr;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.seed) cfg.seed = *f.seed;
  if (f.mask_index) cfg.mask_index = *f.mask_index;
  if (!(cfg.alpha >= 0.0f)) throw ArgumentError("alpha must be >= 0");
  if (cfg.iters < 1) throw ArgumentError("iters must be >= 1");
  if (!(cfg.lr > 0.0)) throw ArgumentError("lr must be > 0");
  if (cfg.jobs < 1) throw ArgumentError("jobs must be >= 1");
  if (cfg.mask_index < 0 || cfg.mask_index >= kNumMaskTokens) {
    throw ArgumentError("mask_index must be in [0, 2]");
  }
  parse_mode(cfg.mode);
  return cfg;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

struct Runtime {
  RunConfig cfg;
  ModelConfig model;
  std::shared_ptr<const TensorBundle> weights;
  std::unique_ptr<ImageEncoder> encoder;
  std::unique_ptr<MaskDecoder> decoder;
  std::string weights_hash;

  explicit Runtime(RunConfig run) : cfg(std::move(run)) {
    if (!cfg.model.empty()) {
      if (!fs::is_regular_file(cfg.model)) throw IoError("model config not found: " + cfg.model);
      model = load_model_config(cfg.model);
    }
    if (cfg.weights == kBuiltin) {
      weights = std::make_shared<const TensorBundle>(synthetic_model_weights(model, cfg.seed));
    } else {
      if (!fs::is_regular_file(cfg.weights)) throw IoError("weights bundle not found: " + cfg.weights);
      weights = std::make_shared<const TensorBundle>(TensorBundle::read_file(cfg.weights));
    }
    weights_hash = hex64(weights->checksum());
    encoder = std::make_unique<ImageEncoder>(model.encoder, weights);
    decoder = std::make_unique<MaskDecoder>(model.decoder, weights);
  }

  SegmentOptions options() const {
    SegmentOptions o;
    o.alpha = cfg.alpha;
    o.mode = parse_mode(cfg.mode);
    o.refine = cfg.refine;
    o.single_mask_index = cfg.mask_index;
    return o;
  }
  FitOptions fit() const {
    FitOptions f;
    f.iterations = cfg.iters;
    f.learning_rate = cfg.lr;
    return f;
  }
  std::map<std::string, std::string> echo() const {
    char alpha[32];
    std::snprintf(alpha, sizeof(alpha), "%g", static_cast<double>(cfg.alpha));
    return {{"alpha", alpha},
            {"mode", cfg.mode},
            {"refine", cfg.refine ? "true" : "false"},
            {"iters", std::to_string(cfg.iters)},
            {"mask_index", std::to_string(cfg.mask_index)},
            {"weights_hash", weights_hash}};
  }
};

Image load_image(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("image not found: " + path);
  return read_png_rgb(path);
}

Mask load_mask(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("mask not found: " + path);
  return read_png_mask(path);
}

std::vector<fs::path> list_pngs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no PNG files in " + dir);
  return files;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

// Subcommands ----------------------------------------------------------------

struct RegisterFlags {
  std::string image, mask;
};

int cmd_register(const CommonFlags& common, const RegisterFlags& f, std::ostream& out) {
  const Runtime rt(resolve(common));
  const Image image = load_image(f.image);
  const Mask mask = load_mask(f.mask);
  ReferenceConcept rc = register_concept(image, mask, *rt.encoder);
  if (rt.options().mode == SegmentMode::kMultiScale) {
    const Segmenter seg(*rt.encoder, *rt.decoder, rt.options());
    const FitReport report = fit_scale_weights(rc, image, mask, seg, rt.fit());
    rc.scale_weights = std::pair{report.weights.w1, report.weights.w2};
  }
  const fs::path dest = fs::path(common.out) / kConceptFile;
  write_concept(dest, rc);
  out << "registered " << rc.n() << " foreground cells -> " << dest.string() << "\n";
  return kExitOk;
}

struct FinetuneFlags {
  std::string concept_path, image, mask;
};

int cmd_finetune(const CommonFlags& common, const FinetuneFlags& f, std::ostream& out) {
  const Runtime rt(resolve(common));
  const Image image = load_image(f.image);
  const Mask mask = load_mask(f.mask);
  ReferenceConcept rc = f.concept_path.empty() ? register_concept(image, mask, *rt.encoder)
                                               : read_concept(f.concept_path);
  SegmentOptions opts = rt.options();
  opts.mode = SegmentMode::kMultiScale;
  const Segmenter seg(*rt.encoder, *rt.decoder, opts);
  const FitReport report = fit_scale_weights(rc, image, mask, seg, rt.fit());
  rc.scale_weights = std::pair{report.weights.w1, report.weights.w2};
  const fs::path dest = fs::path(common.out) / kConceptFile;
  write_concept(dest, rc);
  nlohmann::ordered_json j;
  j["weights"] = {report.weights.w1, report.weights.w2, report.weights.w3()};
  j["final_loss"] = report.final_loss;
  j["best_loss"] = report.best_curve.empty() ? report.final_loss : report.best_curve.back();
  j["iterations"] = report.iterations;
  j["seconds"] = report.seconds;
  j["concept"] = dest.string();
  out << j.dump(2) << "\n";
  return kExitOk;
}

struct SegmentFlags {
  std::string concept_path, image, gt;
};

ReferenceConcept load_concept_arg(const std::string& path) {
  if (path.empty()) throw ArgumentError("--concept is required");
  if (!fs::is_regular_file(path)) throw IoError("concept bundle not found: " + path);
  return read_concept(path);
}

int cmd_segment(const CommonFlags& common, const SegmentFlags& f, std::ostream& out) {
  const Runtime rt(resolve(common));
  const ReferenceConcept rc = load_concept_arg(f.concept_path);
  const Image image = load_image(f.image);
  std::optional<Mask> gt;
  if (!f.gt.empty()) gt = load_mask(f.gt);
  const Segmenter seg(*rt.encoder, *rt.decoder, rt.options());
  const SegmentationResult r = seg.segment(rc, image);
  const fs::path stem = fs::path(common.out) / fs::path(f.image).stem();
  const fs::path png = write_result(stem, r, rt.options(), fs::path(f.image).filename().string(),
                                    gt ? &*gt : nullptr);
  out << png.string() << "\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  return kExitOk;
}

struct BatchFlags {
  std::string concept_path, images;
};

int cmd_segment_batch(const CommonFlags& common, const BatchFlags& f, std::ostream& out) {
  const Runtime rt(resolve(common));
  const ReferenceConcept rc = load_concept_arg(f.concept_path);
  const auto files = list_pngs(f.images);
  const Segmenter seg(*rt.encoder, *rt.decoder, rt.options());
  parallel_for(files.size(), rt.cfg.jobs, [&](std::size_t i) {
    const SegmentationResult r = seg.segment(rc, read_png_rgb(files[i]));
    write_result(fs::path(common.out) / files[i].stem(), r, rt.options(),
                 files[i].filename().string());
  });
  out << "segmented " << files.size() << " images -> " << common.out << "\n";
  return kExitOk;
}

struct EvalFlags {
  std::string data;
  int synthetic = 0;
  bool video = false;
  bool propagate = false;
  std::optional<double> biou_frac;
};

int cmd_eval(const CommonFlags& common, const EvalFlags& f, std::ostream& out) {
  const Runtime rt(resolve(common));
  if (f.data.empty() == (f.synthetic <= 0)) {
    throw ArgumentError("eval needs exactly one of --data DIR or --synthetic N");
  }
  std::vector<ObjectSamples> objects;
  EvalOptions eo;
  eo.video = f.video;
  eo.jobs = rt.cfg.jobs;
  eo.biou_frac = f.biou_frac.value_or(rt.cfg.biou_frac);
  eo.f_frac = rt.cfg.f_frac;
  eo.config = rt.echo();
  if (f.synthetic > 0) {
    objects = synthetic_suite(f.synthetic, rt.cfg.seed);
    eo.config["data"] = "synthetic:" + std::to_string(f.synthetic);
    eo.config["seed"] = std::to_string(rt.cfg.seed);
  } else {
    objects = load_dataset({f.data, 0});
    eo.config["data"] = f.data;
  }
  eo.config["propagate"] = f.propagate ? "true" : "false";
  const MaskDecoder& dec = *rt.decoder;
  const ImageEncoder& enc = *rt.encoder;
  const SegmentOptions so = rt.options();
  const FitOptions fo = rt.fit();
  const EvalReport report = evaluate_objects(
      objects,
      [&] { return std::make_unique<PersonalizedMethod>(enc, dec, so, fo, f.propagate); }, eo);
  write_text(fs::path(common.out) / "report.json", report.to_json());
  write_text(fs::path(common.out) / "report.txt", report.to_table());
  out << report.to_table();
  return kExitOk;
}

struct VideoFlags {
  std::string frames, mask, gt;
  bool propagate = false;
};

int cmd_video(const CommonFlags& common, const VideoFlags& f, std::ostream& out) {
  const Runtime rt(resolve(common));
  const auto files = list_pngs(f.frames);
  std::vector<Image> frames;
  for (const auto& p : files) frames.push_back(read_png_rgb(p));
  const Mask first = load_mask(f.mask);
  const ReferenceConcept rc = register_concept(frames.front(), first, *rt.encoder);
  const Segmenter seg(*rt.encoder, *rt.decoder, rt.options());
  const auto results = segment_video(rc, frames, seg, f.propagate);
  double j_sum = 0.0, f_sum = 0.0;
  int scored = 0;
  for (std::size_t t = 0; t < results.size(); ++t) {
    const fs::path stem = fs::path(common.out) / files[t].stem();
    std::optional<Mask> gt;
    if (!f.gt.empty()) {
      const fs::path gp = fs::path(f.gt) / files[t].filename();
      if (fs::is_regular_file(gp)) gt = read_png_mask(gp);
    }
    write_result(stem, results[t], rt.options(), files[t].filename().string(), gt ? &*gt : nullptr);
    if (gt) {
      j_sum += miou(results[t].mask, *gt);
      f_sum += boundary_f_measure(results[t].mask, *gt, rt.cfg.f_frac);
      ++scored;
    }
  }
  out << "wrote " << results.size() << " frame masks -> " << common.out << "\n";
  if (scored > 0) {
    char line[96];
    std::snprintf(line, sizeof(line), "J %.4f  F %.4f  J&F %.4f\n", j_sum / scored, f_sum / scored,
                  0.5 * (j_sum + f_sum) / scored);
    out << line;
  }
  return kExitOk;
}

struct SelftestFlags {
  std::string emit;
  int scenes = 20;
};

int cmd_selftest(const CommonFlags& common, const SelftestFlags& f, std::ostream& out) {
  if (!f.emit.empty()) {
    const RunConfig cfg = resolve(common);
    ModelConfig model;
    if (!cfg.model.empty()) model = load_model_config(cfg.model);
    const fs::path root = f.emit;
    fs::create_directories(root);
    synthetic_model_weights(model, cfg.seed).write_file(root / "weights.pstb");
    save_model_config(root / "model.json", model);
    write_dataset(root / "dataset", synthetic_suite(f.scenes, cfg.seed));
    write_dataset(root / "video", {translating_square_video(10, cfg.seed)});
    nlohmann::ordered_json run;
    run["weights"] = (root / "weights.pstb").string();
    run["model"] = (root / "model.json").string();
    run["seed"] = cfg.seed;
    write_text(root / "run.json", run.dump(2) + "\n");
    out << "fixtures written to " << root.string() << "\n";
    return kExitOk;
  }
  return run_selftest(out) == 0 ? kExitOk : kExitInternal;
}

void add_common(CLI::App& app, CommonFlags& f) {
  app.add_option("--config", f.config, "JSON run configuration (flags override it)");
  app.add_option("--weights", f.weights, "Weights bundle path, or 'builtin' for seeded synthetic weights");
  app.add_option("--model", f.model, "Model configuration JSON");
  app.add_option("--alpha", f.alpha, "Attention guidance strength (>= 0)");
  app.add_option("--mode", f.mode, "persam | persam-f");
  app.add_flag("--no-refine", f.no_refine, "Skip the two refinement passes");
  app.add_option("--iters", f.iters, "Scale-weight fit iterations");
  app.add_option("--lr", f.lr, "Scale-weight fit learning rate");
  app.add_option("--jobs", f.jobs, "Worker threads");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--seed", f.seed, "Seed for built-in weights and synthetic data");
  app.add_option("--mask-index", f.mask_index, "Scale used in persam mode (0 whole, 1 part, 2 subpart)");
}

}  // namespace

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-shot personalized segmentation", "pseg"};
  app.require_subcommand(1);
  CommonFlags common;
  add_common(app, common);
  app.fallthrough();

  RegisterFlags reg;
  auto* c_reg = app.add_subcommand("register", "Build a concept from a reference image and mask");
  c_reg->add_option("--image", reg.image, "Reference image")->required();
  c_reg->add_option("--mask", reg.mask, "Reference mask")->required();

  SegmentFlags segf;
  auto* c_seg = app.add_subcommand("segment", "Segment one image with a registered concept");
  c_seg->add_option("--concept", segf.concept_path, "Concept bundle")->required();
  c_seg->add_option("--image", segf.image, "Target image")->required();
  c_seg->add_option("--gt", segf.gt, "Optional ground-truth mask for per-stage IoU");

  BatchFlags batch;
  auto* c_batch = app.add_subcommand("segment-batch", "Segment every PNG in a directory");
  c_batch->add_option("--concept", batch.concept_path, "Concept bundle")->required();
  c_batch->add_option("--images", batch.images, "Directory of target images")->required();

  FinetuneFlags fin;
  auto* c_fin = app.add_subcommand("finetune", "Fit the two scale weights on the reference pair");
  c_fin->add_option("--concept", fin.concept_path, "Existing concept bundle (else registered anew)");
  c_fin->add_option("--image", fin.image, "Reference image")->required();
  c_fin->add_option("--mask", fin.mask, "Reference mask")->required();

  EvalFlags ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate on a dataset directory or the synthetic suite");
  c_eval->add_option("--data", ev.data, "Dataset root: <object>/images, <object>/masks");
  c_eval->add_option("--synthetic", ev.synthetic, "Generate N synthetic scenes instead");
  c_eval->add_flag("--video", ev.video, "Treat objects as videos and report J&F");
  c_eval->add_flag("--propagate", ev.propagate, "Re-register the concept from each prediction");
  c_eval->add_option("--biou-frac", ev.biou_frac, "Boundary band width as a fraction of the diagonal");

  VideoFlags vid;
  auto* c_vid = app.add_subcommand("video", "Segment a frame sequence from a first-frame mask");
  c_vid->add_option("--frames", vid.frames, "Directory of frames (sorted by name)")->required();
  c_vid->add_option("--mask", vid.mask, "First-frame mask")->required();
  c_vid->add_option("--gt", vid.gt, "Optional directory of ground-truth masks");
  c_vid->add_flag("--propagate", vid.propagate, "Re-register the concept from each prediction");

  SelftestFlags st;
  auto* c_st = app.add_subcommand("selftest", "Run the built-in invariant checks");
  c_st->add_option("--emit-fixtures", st.emit, "Write synthetic weights, configs and datasets here instead");
  c_st->add_option("--scenes", st.scenes, "Scenes in the emitted dataset");

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  const auto first = std::find_if(args.begin(), args.end(),
                                  [](const std::string& a) { return !a.empty() && a[0] != '-'; });
  if (first != args.end() && first == args.begin() && app.get_subcommand_no_throw(*first) == nullptr) {
    err << "error: unknown subcommand '" << *first << "'\n\n" << app.help();
    return kExitValidation;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (c_reg->parsed()) return cmd_register(common, reg, out);
    if (c_seg->parsed()) return cmd_segment(common, segf, out);
    if (c_batch->parsed()) return cmd_segment_batch(common, batch, out);
    if (c_fin->parsed()) return cmd_finetune(common, fin, out);
    if (c_eval->parsed()) return cmd_eval(common, ev, out);
    if (c_vid->parsed()) return cmd_video(common, vid, out);
    if (c_st->parsed()) return cmd_selftest(common, st, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const LookupError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DegenerateMaskError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  err << app.help();
  return kExitValidation;
}

}  // namespace pseg::cli
