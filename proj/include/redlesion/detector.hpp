#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "redlesion/box.hpp"
#include "redlesion/image.hpp"
#include "redlesion/nnet/detnet.hpp"

namespace redlesion {

using BoxOffsets = std::array<double, 4>;  // (r, c, h, w)

struct LabeledRoi {
  RoiBox box;
  int u = 0;  // 1 = red lesion, 0 = background
  BoxOffsets v{0.0, 0.0, 0.0, 0.0};
  int gt_index = -1;
};

struct Detection {
  RoiBox box;
  double score = 0.0;
  LesionClass stream = LesionClass::MA;
};

/// v_r = (r_g - r) / h, v_c = (c_g - c) / w, v_h = log(h_g / h), v_w = log(w_g / w).
BoxOffsets encode_offsets(const RoiBox& candidate, const RoiBox& gt);
RoiBox decode_offsets(const RoiBox& candidate, const BoxOffsets& t);

double smooth_l1(double x);
double smooth_l1_grad(double x);

/// u = 1 against the best-IoU ground truth when that IoU exceeds the threshold.
std::vector<LabeledRoi> label_candidates(const std::vector<RoiBox>& candidates, const std::vector<RoiBox>& gt,
                                         double iou_threshold = 0.5);

/// -log p_u (p clamped to 1e-12) plus, for u = 1, sum of smooth-L1(t - v).
double multitask_loss(const std::array<double, 2>& p, int u, const BoxOffsets& t, const BoxOffsets& v);

struct SamplingConfig {
  int n_images = 2;
  int r_rois = 64;
  double pos_fraction = 0.25;
};

struct MinibatchItem {
  int image = 0;
  int roi = 0;
  friend bool operator==(const MinibatchItem&, const MinibatchItem&) = default;
};

struct Minibatch {
  std::vector<int> images;
  std::vector<MinibatchItem> items;
  int positives = 0;
};

/// Distinct images with at least one ROI, drawn uniformly. Throws
/// DegenerateInputError when every image is empty.
std::vector<int> choose_images(const std::vector<std::vector<LabeledRoi>>& pool, int n_images, std::mt19937_64& rng);

/// Up to pos_fraction * R positives, the rest negatives, from the given images.
/// A stratum is sampled with replacement only once it is exhausted.
Minibatch sample_rois(const std::vector<std::vector<LabeledRoi>>& pool, const std::vector<int>& images,
                      const SamplingConfig& config, std::mt19937_64& rng);

Minibatch sample_minibatch(const std::vector<std::vector<LabeledRoi>>& pool, const SamplingConfig& config,
                           std::uint64_t seed);

/// Mean multitask loss over the batch and its gradients w.r.t. the logits and offsets.
struct BatchLoss {
  double loss = 0.0;
  nnet::Tensor4 grad_logits;
  nnet::Tensor4 grad_offsets;
};
BatchLoss detection_loss(const nnet::Tensor4& logits, const nnet::Tensor4& offsets, const std::vector<LabeledRoi>& rois);

/// Two-class softmax probability of class 1 for each ROI row.
std::vector<double> lesion_probabilities(const nnet::Tensor4& logits);

/// Rotation about the patch centre (counter-clockwise degrees), nearest
/// neighbour, same output size; uncovered pixels take `fill`.
PlanarImage rotate_patch(const PlanarImage& patch, double angle_deg, float fill);
/// Axis-aligned bounding box of the rotated corners, clamped to the patch.
RoiBox rotate_box(const RoiBox& box, double angle_deg, int height, int width);

enum class InputNormalization { Fixed, OverallMean, PerPatchMean };

struct DetTrainingSample {
  PlanarImage patch;
  std::vector<RoiBox> candidates;  // unextended, patch coordinates
  std::vector<RoiBox> gt;
};

struct DetTrainConfig {
  int iterations = 500;
  double lr = 0.01;
  double momentum = 0.9;
  double lr_decay_at = 2.0 / 3.0;  // fraction of the iterations
  double lr_decay = 0.1;
  SamplingConfig sampling;
  double box_extend = 10.0;
  double positive_iou = 0.5;
  int gt_jitter = 8;             // jittered copies of each gt box added as training ROIs; < 0 adds none
  double gt_jitter_scale = 0.15; // centre shift (fraction of size) and log-size range
  bool augment = true;
  std::vector<double> angles{-45.0, 79.0, 90.0};
  int tile_size = 0;  // 0 trains on whole patches
  InputNormalization normalization = InputNormalization::OverallMean;
  std::uint64_t seed = 1;
};

struct DetTrainReport {
  std::vector<double> losses;  // one per iteration
  std::vector<int> rotated;    // rotated images in each iteration's batch
  int iterations = 0;
};

/// Sets the network's input normalisation from the data (per the config),
/// then runs SGD with momentum over sampled minibatches.
DetTrainReport train_stream(nnet::DetectorNet& net, LesionClass stream, const std::vector<DetTrainingSample>& data,
                            const DetTrainConfig& config);

/// Greedy suppression by descending score (ties: smaller r, then smaller c).
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

struct DetectConfig {
  double theta = 0.6;
  double nms_iou = 0.9;
  double box_extend = 10.0;
  bool regress = true;
};

/// One backbone pass per patch; every candidate is scored, decoded, filtered by
/// theta and suppressed. Boxes are returned in patch coordinates.
std::vector<Detection> detect_stream(const PlanarImage& patch, const std::vector<RoiBox>& candidates,
                                     const nnet::DetectorNet& model, LesionClass stream, const DetectConfig& config);

}  // namespace redlesion
