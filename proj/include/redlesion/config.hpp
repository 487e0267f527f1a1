#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "redlesion/cand_small.hpp"
#include "redlesion/detector.hpp"
#include "redlesion/evalkit.hpp"
#include "redlesion/imgproc.hpp"
#include "redlesion/nnet/detnet.hpp"
#include "redlesion/nnet/segnet.hpp"

namespace redlesion {

/// Every tunable of the pipeline. Stored on disk as "key = value" lines
/// ('#' starts a comment); doubles are written with 17 significant digits so
/// a save/load cycle reproduces the values exactly.
struct PipelineConfig {
  // contrast equalisation
  double alpha = 4.0;
  double tau = -4.0;
  double gamma = 128.0;
  double sigma_divisor = 30.0;

  // small-lesion candidates
  int rpoly_degree = 2;
  int rpoly_window = 41;
  double denoise_sigma = 1.0;
  int line_length_min = 3;
  int line_length_max = 60;
  int line_length_step = 3;
  double line_angle_step = 15.0;
  int k_max = 120;
  int min_small_px = 5;

  // large-lesion candidates
  double dark_threshold = 0.45;
  int min_large_px = 31;
  std::string vessel_source = "fcn";  // fcn | hessian
  double vessel_threshold = 0.5;

  // detection
  double theta_ma = 0.6;
  double theta_hm = 0.6;
  double nms_ma = 0.9;
  double nms_hm = 0.8;
  double nms_image = 0.5;  // frame-level suppression after merging patches
  double box_extend = 10.0;
  bool regress = true;

  // detector training
  int n_images = 2;
  int r_rois = 64;
  double pos_fraction = 0.25;
  double momentum = 0.9;
  double det_lr = 0.01;
  double lr_decay_at = 2.0 / 3.0;
  double lr_decay = 0.1;
  int det_iterations = 500;
  double drop_ma = 0.8;
  double drop_hm = 0.7;
  bool augment = true;
  std::string augment_angles = "-45,79,90";
  int tile_size = 0;
  std::string det_widths = "16,32,64,64";
  int det_hidden = 256;
  std::string normalization = "overall-mean";  // overall-mean | per-patch-mean

  // segmenter training
  double seg_lr = 1e-4;
  int seg_epochs = 200;
  int seg_batch = 20;
  int seg_tile = 64;  // crop size for training patches, 0 = whole patches
  int seg_tiles_per_patch = 4;
  std::string seg_widths = "8,16,32,32";

  // evaluation
  std::string match_mode = "center";  // center | iou
  double iou_min = 0.2;

  // execution
  std::uint64_t seed = 1;
  int threads = 0;  // 0 keeps the OpenMP default

  /// Throws ParameterError naming the first out-of-range key.
  void validate() const;

  EqualizationParams equalization() const;
  SmallCandidateParams small_candidates() const;
  DetTrainConfig detector_training(LesionClass stream) const;
  DetectConfig detection(LesionClass stream) const;
  nnet::DetNetSpec detector_spec(LesionClass stream) const;
  nnet::SegNetSpec segmenter_spec() const;
  nnet::SegTrainConfig segmenter_training() const;
  MatchPolicy match_policy() const;
};

PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& text, const std::string& origin = "<string>");
void save_config(const std::string& path, const PipelineConfig& config);
std::string format_config(const PipelineConfig& config);

bool operator==(const PipelineConfig& a, const PipelineConfig& b);

std::array<int, 4> parse_widths(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

}  // namespace redlesion
