#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "redlesion/image.hpp"
#include "redlesion/nnet/sequential.hpp"

namespace redlesion::nnet {

struct SegNetSpec {
  int in_channels = 3;
  std::array<int, 4> widths{16, 32, 64, 64};
  int classes = 2;
  bool full_resolution_skip = true;  // also fuse a 1x1 score of the first block
  double input_mean = 128.0;
  double input_scale = 1.0 / 64.0;
};

/// Fully-convolutional encoder-decoder: four conv blocks with three 2x2
/// pools, 1x1 score heads on the deeper blocks, and bilinear upsampling with
/// additive skip fusion back to the input resolution.
class SegmentationNet {
 public:
  SegmentationNet(const SegNetSpec& spec, std::uint64_t seed);

  const SegNetSpec& spec() const { return spec_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }
  bool trained() const { return trained_; }
  void set_trained(bool v) { trained_ = v; }

  struct Cache {
    std::array<SequentialCache, 4> blocks;
    std::array<SequentialCache, 4> heads;  // score heads on blocks 1..4 (index 0 unused without the full skip)
    std::array<Tensor4, 3> fused;          // fused maps at strides 4, 2, 1 before further upsampling
    Tensor4 logits;
  };

  /// Input planes are normalised as (v - input_mean) * input_scale inside.
  Tensor4 to_input(const std::vector<const PlanarImage*>& patches) const;

  Cache forward(const Tensor4& x) const;
  /// Accumulates parameter gradients from d loss / d logits; returns the input gradient.
  Tensor4 backward(const Cache& cache, const Tensor4& grad_logits, bool need_input_grad = false);

  /// Per-pixel class probabilities for a single patch (channel 1 = vessel).
  Tensor4 predict(const PlanarImage& patch) const;

  void save(const std::string& path) const;
  static SegmentationNet load(const std::string& path);

 private:
  SegNetSpec spec_;
  std::uint64_t seed_ = 0;
  bool trained_ = false;
  ParamSet params_;
  std::array<Sequential, 4> blocks_;
  std::array<Sequential, 4> heads_;
};

struct SegTrainConfig {
  int epochs = 200;
  int batch_size = 20;
  double lr = 1e-4;
  double momentum = 0.9;
  bool shuffle = true;
  Reduction batch_reduction = Reduction::Mean;
  std::uint64_t seed = 1;
};

struct SegTrainReport {
  std::vector<double> losses;  // one per parameter update
  double pixel_accuracy = 0.0; // on the training set after the last epoch
  int updates = 0;
};

/// Minibatch SGD with momentum on summed per-pixel cross-entropy.
SegTrainReport train_segmenter(SegmentationNet& net, const std::vector<PlanarImage>& patches,
                               const std::vector<BinaryMask>& vessels, const SegTrainConfig& config);

double pixel_accuracy(const SegmentationNet& net, const std::vector<PlanarImage>& patches,
                      const std::vector<BinaryMask>& vessels);

}  // namespace redlesion::nnet
