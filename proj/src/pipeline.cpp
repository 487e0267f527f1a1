#include "redlesion/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "redlesion/cand_large.hpp"
#include "redlesion/cand_small.hpp"
#include "redlesion/error.hpp"
#include "redlesion/imgproc.hpp"
#include "redlesion/log.hpp"

namespace redlesion {

namespace {

double intersection_area(const RoiBox& a, double top, double left, double bottom, double right) {
  const double h = std::min(a.bottom(), bottom) - std::max(a.top(), top);
  const double w = std::min(a.right(), right) - std::max(a.left(), left);
  return h > 0.0 && w > 0.0 ? h * w : 0.0;
}

CandidateMap stream_candidates(const PlanarImage& patch, const FovMask& mask, LesionClass stream,
                               const PipelineConfig& config, const nnet::SegmentationNet* segmenter) {
  if (stream == LesionClass::MA) return generate_small_candidates(patch, mask, config.small_candidates());
  PlanarImage green = scaled(extract_channel(patch, 1), 1.0f / 255.0f);
  const DarkRegionMask dark = dark_region_mask(green, mask, config.dark_threshold);
  const VesselMask vessels = patch_vessels(patch, mask, config, segmenter);
  return generate_large_candidates(dark, vessels, static_cast<std::size_t>(config.min_large_px - 1));
}

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void ingest_frame_gt(const ManifestEntry& e, ImageResult& r) {
  const FrameTransform& t = r.transform;
  for (auto [gt, cls] : {std::pair{&e.ma_gt, LesionClass::MA}, std::pair{&e.hm_gt, LesionClass::HM}}) {
    if (!*gt) continue;
    r.has_gt = true;
    for (const RoiBox& b : ingest_ground_truth(**gt, e.gt_format, r.image_height, r.image_width))
      r.lesions.push_back({clamped(t.to_frame(b), t.frame_size, t.frame_size), cls});
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PreparedImage prepare_image(const PlanarImage& rgb, const PipelineConfig& config) {
  const Preprocessed pre = preprocess_fundus(rgb, config.equalization());
  PreparedImage out;
  out.frame = crop_and_resize(pre.equalized, pre.mask);
  out.patches = split_patches(out.frame.image);
  out.masks = split_mask(out.frame.mask);
  for (int p = 0; p < kPatchCount; ++p)
    out.patches.patches[static_cast<std::size_t>(p)] =
        apply_mask(out.patches.patches[static_cast<std::size_t>(p)], out.masks[static_cast<std::size_t>(p)]);
  return out;
}

BinaryMask frame_mask(const BinaryMask& original, const FrameTransform& t) {
  if (t.crop_row < 0 || t.crop_col < 0 || t.crop_row + t.crop_height > original.height ||
      t.crop_col + t.crop_width > original.width)
    throw ShapeError("frame_mask: crop window lies outside the mask");
  PlanarImage crop(t.crop_height, t.crop_width, 1);
  for (int y = 0; y < t.crop_height; ++y)
    for (int x = 0; x < t.crop_width; ++x) crop.at(0, y, x) = original(t.crop_row + y, t.crop_col + x) ? 1.0f : 0.0f;
  const PlanarImage resized = resize_bilinear(crop, t.frame_size, t.frame_size);
  BinaryMask out(t.frame_size, t.frame_size);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = resized.data[i] >= 0.5f ? 1 : 0;
  return out;
}

BinaryMask patch_vessels(const PlanarImage& patch, const FovMask& mask, const PipelineConfig& config,
                         const nnet::SegmentationNet* segmenter) {
  if (segmenter) return mask_and(segment_vessels(patch, *segmenter, config.vessel_threshold), mask);
  if (config.vessel_source != "hessian")
    throw ModelError("vessel_source = fcn needs a trained segmenter (or set vessel_source = hessian)");
  return hessian_vessel_mask(extract_channel(patch, 1), mask);
}

CandidateMap patch_candidates(const PlanarImage& patch, const FovMask& mask, LesionClass stream,
                              const PipelineConfig& config, const nnet::SegmentationNet* segmenter) {
  return stream_candidates(patch, mask, stream, config, segmenter);
}

PatchCandidates image_candidates(const PreparedImage& image, const PipelineConfig& config,
                                 const nnet::SegmentationNet* segmenter) {
  PatchCandidates out;
  for (std::size_t p = 0; p < kPatchCount; ++p) {
    out.small[p] = stream_candidates(image.patches.patches[p], image.masks[p], LesionClass::MA, config, segmenter);
    out.large[p] = stream_candidates(image.patches.patches[p], image.masks[p], LesionClass::HM, config, segmenter);
  }
  return out;
}

std::vector<Detection> ImageDetections::merged() const {
  std::vector<Detection> all = ma;
  all.insert(all.end(), hm.begin(), hm.end());
  return all;
}

ImageDetections detect_image(const PreparedImage& image, const PatchCandidates& candidates, const PipelineConfig& config,
                             const Models& models) {
  if (!models.ma || !models.hm) throw ModelError("detect_image: both stream detectors are required");
  ImageDetections out;
  for (LesionClass stream : {LesionClass::MA, LesionClass::HM}) {
    const nnet::DetectorNet& model = stream == LesionClass::MA ? *models.ma : *models.hm;
    const DetectConfig dc = config.detection(stream);
    std::vector<Detection> framed;
    for (int p = 0; p < kPatchCount; ++p) {
      const std::vector<RoiBox> boxes = candidates.of(stream, p).boxes();
      if (boxes.empty()) continue;
      for (Detection d : detect_stream(image.patches.patches[static_cast<std::size_t>(p)], boxes, model, stream, dc)) {
        d.box = patch_to_frame(d.box, p);
        framed.push_back(d);
      }
    }
    (stream == LesionClass::MA ? out.ma : out.hm) = nms(std::move(framed), config.nms_image);
  }
  return out;
}

std::vector<LabeledImage> load_labeled_images(const DatasetManifest& manifest, const PipelineConfig& config) {
  std::vector<LabeledImage> out(manifest.entries.size());
  std::vector<std::string> errors(out.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < out.size(); ++i) {
    try {
      const ManifestEntry& e = manifest.entries[i];
      const PlanarImage rgb = read_image(e.image);
      LabeledImage& li = out[i];
      li.id = e.id;
      li.dr = e.dr;
      li.prepared = prepare_image(rgb, config);
      const FrameTransform& t = li.prepared.frame.transform;
      for (auto [gt, cls] : {std::pair{&e.ma_gt, LesionClass::MA}, std::pair{&e.hm_gt, LesionClass::HM}}) {
        if (!*gt) continue;
        for (const RoiBox& b : ingest_ground_truth(**gt, e.gt_format, rgb.height, rgb.width))
          li.lesions.push_back({clamped(t.to_frame(b), t.frame_size, t.frame_size), cls});
      }
      if (e.vessel_gt) {
        const BinaryMask v = read_mask(*e.vessel_gt);
        if (v.height != rgb.height || v.width != rgb.width)
          throw ShapeError("vessel mask " + *e.vessel_gt + " does not match image size");
        li.vessels = mask_and(frame_mask(v, t), li.prepared.frame.mask);
      }
    } catch (const std::exception& ex) {
      errors[i] = manifest.entries[i].id + ": " + ex.what();
    }
  }
  for (const std::string& e : errors)
    if (!e.empty()) throw IoError("loading training image " + e);
  return out;
}

std::vector<RoiBox> patch_ground_truth(const std::vector<GroundTruthLesion>& lesions, LesionClass stream, int patch) {
  const PatchOrigin o = kPatchOrigins.at(static_cast<std::size_t>(patch));
  std::vector<RoiBox> out;
  for (const GroundTruthLesion& l : lesions) {
    if (l.cls != stream || !l.box.valid()) continue;
    const double inside = intersection_area(l.box, o.row, o.col, o.row + kPatchSize, o.col + kPatchSize);
    if (inside < 0.5 * l.box.area()) continue;
    RoiBox b = l.box;
    b.r -= o.row;
    b.c -= o.col;
    out.push_back(clamped(b, kPatchSize, kPatchSize));
  }
  return out;
}

void segmenter_samples(const std::vector<LabeledImage>& images, const PipelineConfig& config,
                       std::vector<PlanarImage>& patches, std::vector<BinaryMask>& vessels) {
  patches.clear();
  vessels.clear();
  std::mt19937_64 rng(nnet::mix_seed(config.seed, 13));
  const int tile = config.seg_tile;
  for (const LabeledImage& li : images) {
    if (!li.vessels) continue;
    const auto vp = split_mask(*li.vessels);
    for (std::size_t p = 0; p < kPatchCount; ++p) {
      const PlanarImage& full = li.prepared.patches.patches[p];
      if (tile <= 0 || tile >= kPatchSize) {
        patches.push_back(full);
        vessels.push_back(vp[p]);
        continue;
      }
      // Every other tile is centred on a lesion when the patch has one: dark
      // blobs are otherwise too rare in the crops to be learnt as non-vessel.
      std::vector<RoiBox> lesions = patch_ground_truth(li.lesions, LesionClass::MA, static_cast<int>(p));
      for (const RoiBox& b : patch_ground_truth(li.lesions, LesionClass::HM, static_cast<int>(p))) lesions.push_back(b);
      std::uniform_int_distribution<int> pick(0, kPatchSize - tile);
      std::uniform_int_distribution<int> jitter(-tile / 4, tile / 4);
      for (int k = 0; k < config.seg_tiles_per_patch; ++k) {
        int y0 = pick(rng), x0 = pick(rng);
        if (k % 2 == 1 && !lesions.empty()) {
          const RoiBox& b = lesions[std::uniform_int_distribution<std::size_t>(0, lesions.size() - 1)(rng)];
          y0 = std::clamp(static_cast<int>(b.r) - tile / 2 + jitter(rng), 0, kPatchSize - tile);
          x0 = std::clamp(static_cast<int>(b.c) - tile / 2 + jitter(rng), 0, kPatchSize - tile);
        }
        PlanarImage crop(tile, tile, full.channels);
        BinaryMask m(tile, tile);
        for (int c = 0; c < full.channels; ++c)
          for (int y = 0; y < tile; ++y)
            for (int x = 0; x < tile; ++x) crop.at(c, y, x) = full.at(c, y0 + y, x0 + x);
        for (int y = 0; y < tile; ++y)
          for (int x = 0; x < tile; ++x) m.set(y, x, vp[p](y0 + y, x0 + x));
        patches.push_back(std::move(crop));
        vessels.push_back(std::move(m));
      }
    }
  }
  if (patches.empty()) throw DegenerateInputError("segmenter training needs images with vessel ground truth");
}

nnet::SegmentationNet train_vessel_segmenter(const std::vector<LabeledImage>& images, const PipelineConfig& config,
                                             nnet::SegTrainReport* report) {
  std::vector<PlanarImage> patches;
  std::vector<BinaryMask> vessels;
  segmenter_samples(images, config, patches, vessels);
  StageTimer timer("train-segmenter (" + std::to_string(patches.size()) + " samples)");
  nnet::SegmentationNet net(config.segmenter_spec(), nnet::mix_seed(config.seed, 20));
  nnet::SegTrainReport r = nnet::train_segmenter(net, patches, vessels, config.segmenter_training());
  if (report) *report = std::move(r);
  return net;
}

std::vector<DetTrainingSample> detector_samples(const std::vector<LabeledImage>& images, LesionClass stream,
                                                const PipelineConfig& config, const nnet::SegmentationNet* segmenter) {
  std::vector<DetTrainingSample> out(images.size() * kPatchCount);
  std::vector<std::string> errors(images.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      for (std::size_t p = 0; p < kPatchCount; ++p) {
        DetTrainingSample& s = out[i * kPatchCount + p];
        s.patch = images[i].prepared.patches.patches[p];
        s.candidates =
            stream_candidates(s.patch, images[i].prepared.masks[p], stream, config, segmenter).boxes();
        s.gt = patch_ground_truth(images[i].lesions, stream, static_cast<int>(p));
      }
    } catch (const std::exception& ex) {
      errors[i] = images[i].id + ": " + ex.what();
    }
  }
  for (const std::string& e : errors)
    if (!e.empty()) throw Error("candidate generation failed for " + e);
  return out;
}

nnet::DetectorNet train_detector(const std::vector<DetTrainingSample>& samples, LesionClass stream,
                                 const PipelineConfig& config, DetTrainReport* report) {
  StageTimer timer("train-detector " + std::string(to_string(stream)));
  nnet::DetectorNet net(config.detector_spec(stream), nnet::mix_seed(config.seed, stream == LesionClass::MA ? 21 : 22));
  DetTrainReport r = train_stream(net, stream, samples, config.detector_training(stream));
  if (report) *report = std::move(r);
  return net;
}

// ---- end to end ----------------------------------------------------------

PipelineResult run_pipeline(const DatasetManifest& manifest, const PipelineConfig& config, const Models& models,
                            const std::string& output_dir) {
  config.validate();
  if (!models.ma || !models.hm) throw ModelError("run_pipeline: MA and HM detectors are required");
  if (!models.ma->trained() || !models.hm->trained()) throw ModelError("run_pipeline: detectors are not trained");
  if (!models.segmenter && config.vessel_source != "hessian")
    throw ModelError("run_pipeline: vessel_source = fcn needs a segmenter model");
  if (models.segmenter && !models.segmenter->trained())
    throw ModelError("run_pipeline: segmenter is not trained");
  if (!output_dir.empty()) std::filesystem::create_directories(output_dir);

  PipelineResult result;
  result.images.resize(manifest.entries.size());
  StageTimer timer("detect (" + std::to_string(manifest.entries.size()) + " images)");
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    ImageResult& r = result.images[i];
    r.id = e.id;
    r.dr = e.dr;
    try {
      const PlanarImage rgb = read_image(e.image);
      const PreparedImage prepared = prepare_image(rgb, config);
      const PatchCandidates cands = image_candidates(prepared, config, models.segmenter);
      r.detections = detect_image(prepared, cands, config, models);
      r.transform = prepared.frame.transform;
      r.image_height = rgb.height;
      r.image_width = rgb.width;
      ingest_frame_gt(e, r);
      if (!output_dir.empty()) write_detections(output_dir, r);
      r.ok = true;
    } catch (const std::exception& ex) {
      r.error = ex.what();
    }
  }
  for (const ImageResult& r : result.images)
    if (!r.ok) {
      ++result.failures;
      log_warning("skipping " + r.id + ": " + r.error);
    }

  result.metrics = evaluate_results(result.images, config);
  if (!output_dir.empty() && result.metrics.available) write_metrics(output_dir, result.metrics, config);
  return result;
}

PipelineMetrics evaluate_results(const std::vector<ImageResult>& results, const PipelineConfig& config) {
  PipelineMetrics m;
  std::vector<const ImageResult*> with_gt;
  for (const ImageResult& r : results)
    if (r.ok && r.has_gt) with_gt.push_back(&r);
  if (with_gt.empty()) {
    log_info("no ground truth in the manifest; metrics skipped");
  } else {
    for (int policy = 0; policy < 2; ++policy) {
      const MatchPolicy mp{policy == 0 ? MatchMode::CenterInRegion : MatchMode::Iou, config.iou_min};
      for (LesionClass stream : {LesionClass::MA, LesionClass::HM}) {
        std::vector<std::vector<Detection>> dets;
        std::vector<std::vector<RoiBox>> gts;
        for (const ImageResult* r : with_gt) {
          dets.push_back(stream == LesionClass::MA ? r->detections.ma : r->detections.hm);
          gts.emplace_back();
          for (const GroundTruthLesion& l : r->lesions)
            if (l.cls == stream) gts.back().push_back(l.box);
        }
        const std::size_t s = stream == LesionClass::MA ? 0 : 1;
        try {
          FrocCurve curve = froc_curve(dets, gts, mp);
          StreamMetrics& sm = m.streams[static_cast<std::size_t>(policy)][s];
          sm.cpm = cpm_score(curve);
          sm.sensitivities = reference_sensitivities(curve);
          sm.sensitivity_at_4 = sensitivity_at_fpi(curve, 4.0);
          m.curves[static_cast<std::size_t>(policy)][s] = std::move(curve);
          m.available = true;
        } catch (const DegenerateInputError& ex) {
          if (policy == 0) log_info(std::string(to_string(stream)) + " FROC skipped: " + ex.what());
        }
      }
    }
  }
  std::vector<double> scores;
  std::vector<bool> labels;
  bool pos = false, neg = false;
  for (const ImageResult& r : results) {
    if (!r.ok) continue;
    scores.push_back(per_image_probability(r.detections.merged()));
    labels.push_back(r.dr);
    (r.dr ? pos : neg) = true;
  }
  if (pos && neg) {
    m.auc = roc_auc(scores, labels);
    m.roc = roc_curve(scores, labels);
    m.available = true;
  }
  return m;
}

std::string detections_jsonl(const ImageDetections& d) {
  std::string out;
  for (const std::vector<Detection>* list : {&d.ma, &d.hm})
    for (const Detection& x : *list)
      out += "{\"stream\":\"" + std::string(to_string(x.stream)) + "\",\"score\":" + fmt6(x.score) +
             ",\"r\":" + fmt6(x.box.r) + ",\"c\":" + fmt6(x.box.c) + ",\"h\":" + fmt6(x.box.h) +
             ",\"w\":" + fmt6(x.box.w) + "}\n";
  return out;
}

std::string detections_csv(const ImageDetections& d) {
  std::string out = "stream,score,r,c,h,w\n";
  for (const std::vector<Detection>* list : {&d.ma, &d.hm})
    for (const Detection& x : *list)
      out += std::string(to_string(x.stream)) + "," + fmt6(x.score) + "," + fmt6(x.box.r) + "," + fmt6(x.box.c) + "," +
             fmt6(x.box.h) + "," + fmt6(x.box.w) + "\n";
  return out;
}

ImageDetections parse_detections_jsonl(const std::string& text) {
  ImageDetections out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Detection d;
      d.stream = lesion_class_from_string(j.at("stream").get<std::string>());
      d.score = j.at("score").get<double>();
      d.box = {j.at("r").get<double>(), j.at("c").get<double>(), j.at("h").get<double>(), j.at("w").get<double>()};
      (d.stream == LesionClass::MA ? out.ma : out.hm).push_back(d);
    } catch (const std::exception& ex) {
      throw IoError("detections line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

void write_detections(const std::string& output_dir, const ImageResult& result) {
  const std::filesystem::path dir(output_dir);
  std::filesystem::create_directories(dir);
  write_text(dir / (result.id + ".detections.jsonl"), detections_jsonl(result.detections));
  write_text(dir / (result.id + ".detections.csv"), detections_csv(result.detections));
  const FrameTransform& t = result.transform;
  const nlohmann::json frame = {{"crop_row", t.crop_row},       {"crop_col", t.crop_col},
                                {"crop_height", t.crop_height}, {"crop_width", t.crop_width},
                                {"frame_size", t.frame_size},   {"image_height", result.image_height},
                                {"image_width", result.image_width}};
  write_text(dir / (result.id + ".frame.json"), frame.dump() + "\n");
}

std::vector<ImageResult> load_results(const DatasetManifest& manifest, const std::string& detections_dir) {
  const std::filesystem::path dir(detections_dir);
  std::vector<ImageResult> out(manifest.entries.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    ImageResult& r = out[i];
    r.id = e.id;
    r.dr = e.dr;
    try {
      const nlohmann::json f = nlohmann::json::parse(read_text(dir / (e.id + ".frame.json")));
      r.transform.crop_row = f.at("crop_row").get<int>();
      r.transform.crop_col = f.at("crop_col").get<int>();
      r.transform.crop_height = f.at("crop_height").get<int>();
      r.transform.crop_width = f.at("crop_width").get<int>();
      r.transform.frame_size = f.at("frame_size").get<int>();
      r.image_height = f.at("image_height").get<int>();
      r.image_width = f.at("image_width").get<int>();
      r.detections = parse_detections_jsonl(read_text(dir / (e.id + ".detections.jsonl")));
      ingest_frame_gt(e, r);
      r.ok = true;
    } catch (const std::exception& ex) {
      r.error = ex.what();
      log_warning("skipping " + e.id + ": " + r.error);
    }
  }
  return out;
}

std::string format_summary(const PipelineMetrics& m) {
  std::ostringstream out;
  const char* policies[2] = {"center", "iou"};
  char line[160];
  std::snprintf(line, sizeof line, "%-7s %-3s %7s %7s %7s %7s %7s %7s %7s %7s %7s\n", "match", "str", "1/8", "1/4",
                "1/2", "1", "2", "4", "8", "CPM", "S@4");
  out << line;
  for (std::size_t policy = 0; policy < 2; ++policy)
    for (std::size_t s = 0; s < 2; ++s) {
      if (m.curves[policy][s].points.empty()) continue;
      const StreamMetrics& sm = m.streams[policy][s];
      std::snprintf(line, sizeof line, "%-7s %-3s", policies[policy], s == 0 ? "MA" : "HM");
      out << line;
      for (double v : sm.sensitivities) {
        std::snprintf(line, sizeof line, " %7.4f", v);
        out << line;
      }
      std::snprintf(line, sizeof line, " %7.4f %7.4f\n", sm.cpm, sm.sensitivity_at_4);
      out << line;
    }
  if (m.auc) {
    std::snprintf(line, sizeof line, "DR screening AUC: %.4f\n", *m.auc);
    out << line;
  } else {
    out << "DR screening AUC: n/a (needs DR and noDR images)\n";
  }
  return out.str();
}

void write_metrics(const std::string& output_dir, const PipelineMetrics& m, const PipelineConfig& config) {
  const std::filesystem::path dir(output_dir);
  std::filesystem::create_directories(dir);
  nlohmann::json j = nlohmann::json::object();
  const char* policies[2] = {"center", "iou"};
  for (std::size_t policy = 0; policy < 2; ++policy)
    for (std::size_t s = 0; s < 2; ++s) {
      const FrocCurve& c = m.curves[policy][s];
      if (c.points.empty()) continue;
      const std::string stream(to_string(s == 0 ? LesionClass::MA : LesionClass::HM));
      const std::string stem = std::string("froc_") + policies[policy] + "_" + stream;
      std::ostringstream csv;
      write_froc_csv(csv, c);
      write_text(dir / (stem + ".csv"), csv.str());
      write_text(dir / (stem + ".svg"), froc_svg(c, stream + " FROC (" + policies[policy] + " matching)"));
      const StreamMetrics& sm = m.streams[policy][s];
      j["froc"][policies[policy]][stream] = {{"cpm", sm.cpm},
                                             {"sensitivities", sm.sensitivities},
                                             {"sensitivity_at_fpi_4", sm.sensitivity_at_4}};
    }
  if (m.auc) {
    std::ostringstream csv;
    write_roc_csv(csv, m.roc);
    write_text(dir / "roc.csv", csv.str());
    write_text(dir / "roc.svg", roc_svg(m.roc, "DR screening ROC"));
    j["auc"] = *m.auc;
  }
  j["match_mode_default"] = config.match_mode;
  write_text(dir / "metrics.json", j.dump(2) + "\n");
}

}  // namespace redlesion
