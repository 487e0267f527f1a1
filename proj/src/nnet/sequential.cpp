#include "redlesion/nnet/sequential.hpp"

#include "redlesion/error.hpp"

namespace redlesion::nnet {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Sequential::Sequential(std::vector<LayerSpec> layers, ParamSet& params, const std::string& prefix)
    : layers_(std::move(layers)), weight_index_(layers_.size(), -1), bias_index_(layers_.size(), -1) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const std::string name = prefix + "." + std::to_string(i);
    if (l.kind == LayerKind::Conv) {
      if (l.in <= 0 || l.out <= 0 || l.kernel <= 0 || l.kernel % 2 == 0)
        throw ParameterError("conv layer " + name + ": bad channel counts or kernel");
      weight_index_[i] = params.add(name + ".weight", {l.out, l.in, l.kernel, l.kernel}, l.in * l.kernel * l.kernel, l.init_std);
      bias_index_[i] = params.add(name + ".bias", {l.out}, 0);
    } else if (l.kind == LayerKind::Linear) {
      if (l.in <= 0 || l.out <= 0) throw ParameterError("linear layer " + name + ": bad feature counts");
      weight_index_[i] = params.add(name + ".weight", {l.in, l.out}, l.in, l.init_std);
      bias_index_[i] = params.add(name + ".bias", {l.out}, 0);
    } else if (l.kind == LayerKind::Dropout) {
      if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ParameterError("dropout layer " + name + ": rate must be in [0, 1)");
    }
  }
}

SequentialCache Sequential::forward(const ParamSet& params, const Tensor4& x, bool train, std::uint64_t seed) const {
  SequentialCache cache;
  cache.owner = &params;
  cache.version = params.version();
  cache.train = train;
  cache.activations.reserve(layers_.size() + 1);
  cache.activations.push_back(x);
  cache.argmax.resize(layers_.size());
  cache.keep.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Tensor4& in = cache.activations.back();
    Tensor4 out;
    switch (layers_[i].kind) {
      case LayerKind::Conv:
        out = conv2d_forward(in, params[weight_index_[i]], params[bias_index_[i]]);
        break;
      case LayerKind::ReLU:
        out = relu_forward(in);
        break;
      case LayerKind::MaxPool:
        out = maxpool2_forward(in, cache.argmax[i]);
        break;
      case LayerKind::Linear:
        out = linear_forward(in, params[weight_index_[i]], params[bias_index_[i]]);
        break;
      case LayerKind::Dropout:
        out = dropout_forward(in, layers_[i].rate, train, mix_seed(seed, i), cache.keep[i]);
        break;
    }
    cache.activations.push_back(std::move(out));
  }
  return cache;
}

Tensor4 Sequential::backward(ParamSet& params, const SequentialCache& cache, const Tensor4& grad_out,
                             bool need_input_grad) const {
  if (cache.owner != &params || cache.version != params.version())
    throw ModelError("backward: cache does not belong to the current parameters");
  if (cache.activations.size() != layers_.size() + 1) throw ModelError("backward: cache from a different network");
  if (!grad_out.same_shape(cache.output())) throw ShapeError("backward: gradient shape does not match output");
  Tensor4 g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Tensor4& in = cache.activations[k];
    const bool need = need_input_grad || k > 0;
    switch (layers_[k].kind) {
      case LayerKind::Conv:
        g = conv2d_backward(in, params[weight_index_[k]], params[bias_index_[k]], g, need);
        break;
      case LayerKind::ReLU:
        g = relu_backward(in, g);
        break;
      case LayerKind::MaxPool:
        g = maxpool2_backward(in, cache.argmax[k], g);
        break;
      case LayerKind::Linear:
        g = linear_backward(in, params[weight_index_[k]], params[bias_index_[k]], g);
        break;
      case LayerKind::Dropout:
        g = dropout_backward(g, layers_[k].rate, cache.train, cache.keep[k]);
        break;
    }
  }
  return g;
}

}  // namespace redlesion::nnet
