// redlesion: command line front end of the red-lesion detection toolkit.

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "redlesion/candidates.hpp"
#include "redlesion/config.hpp"
#include "redlesion/dataset.hpp"
#include "redlesion/error.hpp"
#include "redlesion/imgproc.hpp"
#include "redlesion/log.hpp"
#include "redlesion/patches.hpp"
#include "redlesion/pipeline.hpp"
#include "redlesion/synth.hpp"

namespace fs = std::filesystem;
using namespace redlesion;

namespace {

constexpr const char* kSegmenterFile = "segmenter.rlnet";
constexpr const char* kDetectorMaFile = "detector_ma.rlnet";
constexpr const char* kDetectorHmFile = "detector_hm.rlnet";

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool verbose = false;
  bool quiet = false;
};

// Loaded, overridden and validated before any subcommand reads data.
PipelineConfig resolve_config(const GlobalOptions& g) {
  PipelineConfig base = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (!g.overrides.empty()) {
    std::string text = format_config(base);
    for (const std::string& kv : g.overrides) {
      if (kv.find('=') == std::string::npos) throw ParameterError("--set expects key=value, got '" + kv + "'");
      text += kv + "\n";
    }
    base = parse_config(text, "--set");
  }
  if (g.seed) base.seed = *g.seed;
  if (g.threads) base.threads = *g.threads;
  base.validate();
  if (base.threads > 0) omp_set_num_threads(base.threads);
  return base;
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text_file(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::optional<nnet::SegmentationNet> load_segmenter(const std::string& path, const PipelineConfig& config,
                                                    bool needed) {
  if (!path.empty()) return nnet::SegmentationNet::load(path);
  if (needed && config.vessel_source != "hessian")
    throw ModelError("vessel_source = fcn needs --segmenter (or --set vessel_source=hessian)");
  return std::nullopt;
}

// Writes the candidate boxes of every patch as JSON lines plus the union of
// the candidate masks in frame coordinates.
void write_candidates(const PreparedImage& prepared, const std::array<CandidateMap, kPatchCount>& maps,
                      const std::string& out_path, const std::string& mask_path) {
  std::ostringstream lines;
  std::size_t total = 0;
  for (int p = 0; p < kPatchCount; ++p) {
    write_candidates_jsonl(lines, maps[static_cast<std::size_t>(p)], p);
    total += maps[static_cast<std::size_t>(p)].components.size();
  }
  write_text_file(out_path, lines.str());
  if (!mask_path.empty()) {
    const int n = prepared.frame.transform.frame_size;
    BinaryMask frame(n, n);
    for (int p = 0; p < kPatchCount; ++p) {
      const BinaryMask& m = maps[static_cast<std::size_t>(p)].mask;
      const PatchOrigin o = kPatchOrigins[static_cast<std::size_t>(p)];
      for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
          if (m(r, c)) frame.set(r + o.row, c + o.col, true);
    }
    ensure_parent(mask_path);
    write_mask(mask_path, frame);
  }
  std::cout << total << " candidates written to " << out_path << "\n";
}

int cmd_candidates(const GlobalOptions& g, LesionClass stream, const std::string& image_path,
                   const std::string& out_path, const std::string& mask_path, const std::string& segmenter_path) {
  const PipelineConfig config = resolve_config(g);
  const auto segmenter = stream == LesionClass::HM ? load_segmenter(segmenter_path, config, true) : std::nullopt;
  const PreparedImage prepared = prepare_image(read_image(image_path), config);
  std::array<CandidateMap, kPatchCount> maps;
  {
    StageTimer timer(std::string("candidates ") + std::string(to_string(stream)));
    for (std::size_t p = 0; p < kPatchCount; ++p)
      maps[p] = patch_candidates(prepared.patches.patches[p], prepared.masks[p], stream, config,
                                 segmenter ? &*segmenter : nullptr);
  }
  write_candidates(prepared, maps, out_path, mask_path);
  return 0;
}

void print_metrics(const PipelineMetrics& metrics) {
  if (!metrics.available) {
    std::cout << "no ground truth in the manifest: metrics skipped\n";
    return;
  }
  std::cout << format_summary(metrics);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Red-lesion (microaneurysm / haemorrhage) detection in fundus images"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "config file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override a config key, key=value (repeatable)");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--threads", g.threads, "worker threads (0 = OpenMP default)");
  app.add_flag("-v,--verbose", g.verbose, "per-stage timing and progress on stderr");
  app.add_flag("-q,--quiet", g.quiet, "errors only");

  std::string image, out, mask_out, frame_out, manifest, models, segmenter, detections, stream_name = "both";
  int count = 20, clean = 10, synth_size = 760;
  std::uint64_t synth_seed = 1;
  bool full_fov = false;

  auto* c_config = app.add_subcommand("config", "write the effective configuration");
  c_config->add_option("-o,--out", out, "output file (default: stdout)");

  auto* c_mask = app.add_subcommand("mask", "field-of-view mask of a fundus image");
  c_mask->add_option("-i,--image", image)->required()->check(CLI::ExistingFile);
  c_mask->add_option("-o,--out", out, "mask png")->required();

  auto* c_pre = app.add_subcommand("preprocess", "aperture padding and contrast equalisation");
  c_pre->add_option("-i,--image", image)->required()->check(CLI::ExistingFile);
  c_pre->add_option("-o,--out", out, "equalised image")->required();
  c_pre->add_option("--frame-out", frame_out, "cropped and resized 700x700 frame");
  c_pre->add_option("--mask-out", mask_out, "field-of-view mask");

  auto* c_small = app.add_subcommand("candidates-small", "microaneurysm candidates of the four patches");
  c_small->add_option("-i,--image", image)->required()->check(CLI::ExistingFile);
  c_small->add_option("-o,--out", out, "candidate boxes, JSON lines (patch coordinates)")->required();
  c_small->add_option("--mask-out", mask_out, "union of candidate pixels in the frame");

  auto* c_large = app.add_subcommand("candidates-large", "haemorrhage candidates of the four patches");
  c_large->add_option("-i,--image", image)->required()->check(CLI::ExistingFile);
  c_large->add_option("-o,--out", out, "candidate boxes, JSON lines (patch coordinates)")->required();
  c_large->add_option("--mask-out", mask_out, "union of candidate pixels in the frame");
  c_large->add_option("--segmenter", segmenter, "trained vessel segmenter")->check(CLI::ExistingFile);

  auto* c_tseg = app.add_subcommand("train-segmenter", "train the vessel segmenter on manifest vessel masks");
  c_tseg->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
  c_tseg->add_option("-o,--out", out, "model file")->required();

  auto* c_tdet = app.add_subcommand("train-detector", "train the MA and/or HM detector");
  c_tdet->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
  c_tdet->add_option("-o,--out-dir", out, "model directory")->required();
  c_tdet->add_option("--stream", stream_name, "ma | hm | both")->check(CLI::IsMember({"ma", "hm", "both"}));
  c_tdet->add_option("--segmenter", segmenter, "vessel segmenter for HM candidates")->check(CLI::ExistingFile);

  auto* c_detect = app.add_subcommand("detect", "run the full pipeline over a manifest");
  c_detect->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
  c_detect->add_option("--models", models, "directory with detector_ma / detector_hm (and segmenter)")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_detect->add_option("-o,--out-dir", out, "detections and reports")->required();

  auto* c_eval = app.add_subcommand("eval", "FROC / CPM / ROC of existing detection files");
  c_eval->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
  c_eval->add_option("-d,--detections", detections, "directory written by detect")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_eval->add_option("-o,--out-dir", out, "report directory (default: the detections directory)");

  auto* c_synth = app.add_subcommand("synth", "synthetic fundus dataset with exact ground truth");
  c_synth->add_option("-o,--out-dir", out)->required();
  c_synth->add_option("-n,--count", count, "images")->check(CLI::PositiveNumber);
  c_synth->add_option("--clean", clean, "images without lesions (the last ones)")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--size", synth_size, "canvas size")->check(CLI::Range(64, 4096));
  c_synth->add_option("--synth-seed", synth_seed, "generator seed");
  c_synth->add_flag("--full-fov", full_fov, "no circular aperture");

  CLI11_PARSE(app, argc, argv);

  set_log_level(g.quiet ? LogLevel::Quiet : g.verbose ? LogLevel::Info : LogLevel::Warning);

  try {
    if (*c_config) {
      const PipelineConfig config = resolve_config(g);
      if (out.empty())
        std::cout << format_config(config);
      else
        save_config(out, config);
      return 0;
    }

    if (*c_mask) {
      resolve_config(g);
      const FovMask mask = extract_fov_mask(read_image(image));
      ensure_parent(out);
      write_mask(out, mask);
      std::cout << "fov width " << fov_width(mask) << " px\n";
      return 0;
    }

    if (*c_pre) {
      const PipelineConfig config = resolve_config(g);
      const Preprocessed pre = preprocess_fundus(read_image(image), config.equalization());
      ensure_parent(out);
      write_image(out, pre.equalized);
      if (!mask_out.empty()) {
        ensure_parent(mask_out);
        write_mask(mask_out, pre.mask);
      }
      if (!frame_out.empty()) {
        const FramedImage framed = crop_and_resize(pre.equalized, pre.mask);
        ensure_parent(frame_out);
        write_image(frame_out, apply_mask(framed.image, framed.mask));
      }
      return 0;
    }

    if (*c_small) return cmd_candidates(g, LesionClass::MA, image, out, mask_out, "");
    if (*c_large) return cmd_candidates(g, LesionClass::HM, image, out, mask_out, segmenter);

    if (*c_tseg) {
      const PipelineConfig config = resolve_config(g);
      const DatasetManifest m = load_manifest(manifest);
      const auto images = load_labeled_images(m, config);
      nnet::SegTrainReport report;
      const nnet::SegmentationNet net = train_vessel_segmenter(images, config, &report);
      ensure_parent(out);
      net.save(out);
      std::cout << "segmenter saved to " << out << "\n";
      return 0;
    }

    if (*c_tdet) {
      PipelineConfig config = resolve_config(g);
      const DatasetManifest m = load_manifest(manifest);
      // the dataset decides how patches are normalised
      config.normalization = m.normalization;
      const bool want_hm = stream_name != "ma";
      const auto seg = want_hm ? load_segmenter(segmenter, config, true) : std::nullopt;
      const auto images = load_labeled_images(m, config);
      fs::create_directories(out);
      for (LesionClass stream : {LesionClass::MA, LesionClass::HM}) {
        if (stream == LesionClass::MA && stream_name == "hm") continue;
        if (stream == LesionClass::HM && stream_name == "ma") continue;
        const auto samples = detector_samples(images, stream, config, seg ? &*seg : nullptr);
        DetTrainReport report;
        const nnet::DetectorNet net = train_detector(samples, stream, config, &report);
        const std::string path = (fs::path(out) / (stream == LesionClass::MA ? kDetectorMaFile : kDetectorHmFile)).string();
        net.save(path, {{"stream", std::string(to_string(stream))}, {"normalization", config.normalization}});
        std::cout << to_string(stream) << " detector saved to " << path << "\n";
      }
      // detect looks for the segmenter next to the detectors
      const fs::path seg_target = fs::path(out) / kSegmenterFile;
      if (seg && !segmenter.empty() && !(fs::exists(seg_target) && fs::equivalent(segmenter, seg_target)))
        fs::copy_file(segmenter, seg_target, fs::copy_options::overwrite_existing);
      save_config((fs::path(out) / "config.txt").string(), config);
      return 0;
    }

    if (*c_detect) {
      const PipelineConfig config = resolve_config(g);
      const DatasetManifest m = load_manifest(manifest);
      const fs::path dir(models);
      const nnet::DetectorNet ma = nnet::DetectorNet::load((dir / kDetectorMaFile).string());
      const nnet::DetectorNet hm = nnet::DetectorNet::load((dir / kDetectorHmFile).string());
      std::optional<nnet::SegmentationNet> seg;
      if (fs::exists(dir / kSegmenterFile) && config.vessel_source == "fcn")
        seg = nnet::SegmentationNet::load((dir / kSegmenterFile).string());
      const Models mdl{&ma, &hm, seg ? &*seg : nullptr};
      const PipelineResult result = run_pipeline(m, config, mdl, out);
      std::cout << (result.images.size() - static_cast<std::size_t>(result.failures)) << "/" << result.images.size()
                << " images processed, detections in " << out << "\n";
      print_metrics(result.metrics);
      if (!result.images.empty() && result.failures == static_cast<int>(result.images.size())) return 1;
      return 0;
    }

    if (*c_eval) {
      const PipelineConfig config = resolve_config(g);
      const DatasetManifest m = load_manifest(manifest);
      const auto results = load_results(m, detections);
      const PipelineMetrics metrics = evaluate_results(results, config);
      if (metrics.available) write_metrics(out.empty() ? detections : out, metrics, config);
      print_metrics(metrics);
      return 0;
    }

    if (*c_synth) {
      resolve_config(g);
      if (clean > count) throw ParameterError("--clean must not exceed --count");
      SynthConfig sc;
      sc.size = synth_size;
      sc.fov_radius = synth_size * 345.0 / 760.0;
      sc.full_fov = full_fov;
      const DatasetManifest m = write_synthetic_dataset(out, count, clean, sc, synth_seed);
      std::cout << m.entries.size() << " images written to " << out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
