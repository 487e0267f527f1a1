#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "redlesion/candidates.hpp"
#include "redlesion/config.hpp"
#include "redlesion/dataset.hpp"
#include "redlesion/detector.hpp"
#include "redlesion/evalkit.hpp"
#include "redlesion/patches.hpp"
#include "redlesion/nnet/detnet.hpp"
#include "redlesion/nnet/segnet.hpp"

namespace redlesion {

/// An image after equalisation, framing and splitting.
struct PreparedImage {
  FramedImage frame;
  PatchSet patches;
  std::array<BinaryMask, kPatchCount> masks;
};

PreparedImage prepare_image(const PlanarImage& rgb, const PipelineConfig& config);

/// Resamples a mask given in original image coordinates into the frame.
BinaryMask frame_mask(const BinaryMask& original, const FrameTransform& transform);

/// Vessel map of one patch. A null model selects the Hessian fallback, which
/// is only allowed when the config asks for it.
BinaryMask patch_vessels(const PlanarImage& patch, const FovMask& mask, const PipelineConfig& config,
                         const nnet::SegmentationNet* segmenter);

/// Candidates of one stream on one prepared patch.
CandidateMap patch_candidates(const PlanarImage& patch, const FovMask& mask, LesionClass stream,
                              const PipelineConfig& config, const nnet::SegmentationNet* segmenter);

struct PatchCandidates {
  std::array<CandidateMap, kPatchCount> small;
  std::array<CandidateMap, kPatchCount> large;
  const CandidateMap& of(LesionClass stream, int patch) const {
    return stream == LesionClass::MA ? small[static_cast<std::size_t>(patch)] : large[static_cast<std::size_t>(patch)];
  }
};

PatchCandidates image_candidates(const PreparedImage& image, const PipelineConfig& config,
                                 const nnet::SegmentationNet* segmenter);

struct Models {
  const nnet::DetectorNet* ma = nullptr;
  const nnet::DetectorNet* hm = nullptr;
  const nnet::SegmentationNet* segmenter = nullptr;  // null: Hessian vessels
};

/// Frame-coordinate detections of both streams.
struct ImageDetections {
  std::vector<Detection> ma;
  std::vector<Detection> hm;
  std::vector<Detection> merged() const;
};

/// Per-stream detection on every patch, mapped to the frame, then suppressed
/// across overlapping patches with the image-level threshold.
ImageDetections detect_image(const PreparedImage& image, const PatchCandidates& candidates, const PipelineConfig& config,
                             const Models& models);

// ---- training data -------------------------------------------------------

struct LabeledImage {
  std::string id;
  PreparedImage prepared;
  std::vector<GroundTruthLesion> lesions;  // frame coordinates
  std::optional<BinaryMask> vessels;       // frame coordinates
  bool dr = false;
};

/// Reads and prepares every manifest entry; ground truth is mapped to the frame.
std::vector<LabeledImage> load_labeled_images(const DatasetManifest& manifest, const PipelineConfig& config);

/// Ground truth of one stream that falls in a patch, in patch coordinates.
/// A lesion belongs to a patch when at least half its area lies inside it.
std::vector<RoiBox> patch_ground_truth(const std::vector<GroundTruthLesion>& lesions, LesionClass stream, int patch);

/// Segmenter training pairs: whole patches, or `seg_tile` sized random crops.
void segmenter_samples(const std::vector<LabeledImage>& images, const PipelineConfig& config,
                       std::vector<PlanarImage>& patches, std::vector<BinaryMask>& vessels);

nnet::SegmentationNet train_vessel_segmenter(const std::vector<LabeledImage>& images, const PipelineConfig& config,
                                             nnet::SegTrainReport* report = nullptr);

std::vector<DetTrainingSample> detector_samples(const std::vector<LabeledImage>& images, LesionClass stream,
                                                const PipelineConfig& config, const nnet::SegmentationNet* segmenter);

nnet::DetectorNet train_detector(const std::vector<DetTrainingSample>& samples, LesionClass stream,
                                 const PipelineConfig& config, DetTrainReport* report = nullptr);

// ---- end to end ----------------------------------------------------------

struct ImageResult {
  std::string id;
  bool ok = false;
  std::string error;
  ImageDetections detections;
  std::vector<GroundTruthLesion> lesions;  // frame coordinates
  bool has_gt = false;
  bool dr = false;
  FrameTransform transform;
  int image_height = 0;
  int image_width = 0;
};

struct StreamMetrics {
  double cpm = 0.0;
  std::array<double, 7> sensitivities{};
  double sensitivity_at_4 = 0.0;
};

struct PipelineMetrics {
  bool available = false;
  // [policy][stream]: policy 0 = centre-in-region, 1 = iou
  std::array<std::array<StreamMetrics, 2>, 2> streams{};
  std::array<std::array<FrocCurve, 2>, 2> curves{};
  std::optional<double> auc;
  std::vector<RocPoint> roc;
};

struct PipelineResult {
  std::vector<ImageResult> images;
  PipelineMetrics metrics;
  int failures = 0;
};

/// Runs detection over the manifest. Per-image failures are logged and
/// skipped. With an output directory, writes <id>.detections.jsonl / .csv per
/// image and, when ground truth is present, the FROC/ROC reports.
PipelineResult run_pipeline(const DatasetManifest& manifest, const PipelineConfig& config, const Models& models,
                            const std::string& output_dir = "");

/// Metrics over already computed results; images without gt are ignored for FROC.
PipelineMetrics evaluate_results(const std::vector<ImageResult>& results, const PipelineConfig& config);

/// <id>.detections.jsonl, <id>.detections.csv and <id>.frame.json (crop and image size).
void write_detections(const std::string& output_dir, const ImageResult& result);
/// Reads the files written by write_detections back for every manifest entry
/// and ingests the ground truth into the frame. Missing files mark the image failed.
std::vector<ImageResult> load_results(const DatasetManifest& manifest, const std::string& detections_dir);

/// Human-readable CPM / sensitivity / AUC table.
std::string format_summary(const PipelineMetrics& metrics);
void write_metrics(const std::string& output_dir, const PipelineMetrics& metrics, const PipelineConfig& config);

/// Detections of one image as JSON lines, in frame coordinates.
std::string detections_jsonl(const ImageDetections& detections);
std::string detections_csv(const ImageDetections& detections);
/// Parses detections_jsonl output; stream tags pick the list.
ImageDetections parse_detections_jsonl(const std::string& text);

}  // namespace redlesion
