#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "redlesion/box.hpp"
#include "redlesion/image.hpp"
#include "redlesion/nnet/sequential.hpp"

namespace redlesion::nnet {

struct DetNetSpec {
  int in_channels = 3;
  std::array<int, 4> widths{16, 32, 64, 64};
  int pool_size = 4;
  int hidden = 256;
  double dropout = 0.5;
  double cls_init_std = 0.01;
  double reg_init_std = 0.001;
  double input_mean = 128.0;
  double input_scale = 1.0 / 64.0;
  bool per_patch_mean = false;  // subtract each patch's own mean instead of input_mean

  static constexpr int kStride = 8;
};

/// Conv backbone (stride 8) shared by every ROI of an image, ROI max-pooling,
/// two fully-connected layers with dropout, and classification (2 logits,
/// index 1 = lesion) plus box-regression (4 offsets) heads.
class DetectorNet {
 public:
  DetectorNet(const DetNetSpec& spec, std::uint64_t seed);

  const DetNetSpec& spec() const { return spec_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }
  bool trained() const { return trained_; }
  void set_trained(bool v) { trained_ = v; }
  void set_input_normalization(double mean, bool per_patch_mean) {
    spec_.input_mean = mean;
    spec_.per_patch_mean = per_patch_mean;
  }

  Tensor4 to_input(const PlanarImage& patch) const;

  struct Cache {
    std::vector<SequentialCache> backbone;  // one per image
    std::vector<RoiPoolResult> pooled;      // one per image
    std::vector<int> roi_counts;
    SequentialCache trunk;
    SequentialCache cls;
    SequentialCache reg;
    const Tensor4& logits() const { return cls.output(); }
    const Tensor4& offsets() const { return reg.output(); }
  };

  /// `rois[i]` are boxes in the pixel coordinates of `images[i]` (n = 1 each).
  Cache forward(const std::vector<Tensor4>& images, const std::vector<std::vector<RoiBox>>& rois, bool train,
                std::uint64_t seed) const;
  void backward(const Cache& cache, const Tensor4& grad_logits, const Tensor4& grad_offsets);

  // Inference split: one backbone pass, then any number of ROI batches.
  Tensor4 features(const Tensor4& image) const;
  struct HeadOutput {
    Tensor4 logits;
    Tensor4 offsets;
  };
  HeadOutput score_rois(const Tensor4& features, const std::vector<RoiBox>& rois) const;

  void save(const std::string& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  static DetectorNet load(const std::string& path, nlohmann::json* extra = nullptr);

 private:
  DetNetSpec spec_;
  std::uint64_t seed_ = 0;
  bool trained_ = false;
  ParamSet params_;
  Sequential backbone_;
  Sequential trunk_;
  Sequential cls_;
  Sequential reg_;
};

}  // namespace redlesion::nnet
