#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redlesion/nnet/layers.hpp"

namespace redlesion::nnet {

enum class LayerKind { Conv, ReLU, MaxPool, Linear, Dropout };

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int in = 0;       // channels (conv) or features (linear)
  int out = 0;
  int kernel = 3;
  double rate = 0.0;  // dropout
  double init_std = 0.0;

  static LayerSpec conv(int in, int out, int kernel = 3) { return {LayerKind::Conv, in, out, kernel, 0.0, 0.0}; }
  static LayerSpec relu() { return {LayerKind::ReLU, 0, 0, 0, 0.0, 0.0}; }
  static LayerSpec maxpool() { return {LayerKind::MaxPool, 0, 0, 0, 0.0, 0.0}; }
  static LayerSpec linear(int in, int out, double init_std = 0.0) { return {LayerKind::Linear, in, out, 0, 0.0, init_std}; }
  static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, 0, rate, 0.0}; }
};

/// Mixes a base seed with a stream id (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct SequentialCache {
  const void* owner = nullptr;
  std::uint64_t version = 0;
  bool train = false;
  std::vector<Tensor4> activations;  // input of every layer, then the output
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<std::vector<std::uint8_t>> keep;

  const Tensor4& output() const { return activations.back(); }
};

/// Chain of layers whose parameters live in a shared ParamSet.
class Sequential {
 public:
  Sequential() = default;
  Sequential(std::vector<LayerSpec> layers, ParamSet& params, const std::string& prefix);

  const std::vector<LayerSpec>& layers() const { return layers_; }

  SequentialCache forward(const ParamSet& params, const Tensor4& x, bool train, std::uint64_t seed) const;
  /// Accumulates parameter gradients; returns the input gradient (left empty
  /// when `need_input_grad` is false).
  Tensor4 backward(ParamSet& params, const SequentialCache& cache, const Tensor4& grad_out,
                   bool need_input_grad = true) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<int> weight_index_;
  std::vector<int> bias_index_;
};

}  // namespace redlesion::nnet
