#include "redlesion/nnet/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "redlesion/error.hpp"
#include "redlesion/nnet/checkpoint.hpp"

namespace redlesion::nnet {

namespace {

void add_into(Tensor4& a, const Tensor4& b) {
  if (!a.same_shape(b)) throw ShapeError("segmenter: skip fusion shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

nlohmann::json spec_to_json(const SegNetSpec& s) {
  return {{"in_channels", s.in_channels}, {"widths", s.widths}, {"classes", s.classes},
          {"full_resolution_skip", s.full_resolution_skip}, {"input_mean", s.input_mean},
          {"input_scale", s.input_scale}};
}

SegNetSpec spec_from_json(const nlohmann::json& j) {
  SegNetSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.widths = j.at("widths").get<std::array<int, 4>>();
  s.classes = j.at("classes").get<int>();
  s.full_resolution_skip = j.at("full_resolution_skip").get<bool>();
  s.input_mean = j.at("input_mean").get<double>();
  s.input_scale = j.at("input_scale").get<double>();
  return s;
}

}  // namespace

SegmentationNet::SegmentationNet(const SegNetSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  if (spec.in_channels <= 0 || spec.classes < 2) throw ParameterError("segmenter: need >= 1 input channel and >= 2 classes");
  for (int w : spec.widths)
    if (w <= 0) throw ParameterError("segmenter: block widths must be positive");
  const auto& w = spec.widths;
  blocks_[0] = Sequential({LayerSpec::conv(spec.in_channels, w[0]), LayerSpec::relu()}, params_, "enc1");
  for (int b = 1; b < 4; ++b)
    blocks_[b] = Sequential({LayerSpec::maxpool(), LayerSpec::conv(w[b - 1], w[b]), LayerSpec::relu()}, params_,
                            "enc" + std::to_string(b + 1));
  for (int b = spec.full_resolution_skip ? 0 : 1; b < 4; ++b)
    heads_[b] = Sequential({LayerSpec::conv(w[b], spec.classes, 1)}, params_, "score" + std::to_string(b + 1));
  params_.initialize(seed);
}

Tensor4 SegmentationNet::to_input(const std::vector<const PlanarImage*>& patches) const {
  if (patches.empty()) throw ShapeError("segmenter: empty batch");
  const PlanarImage& first = *patches.front();
  Tensor4 x(static_cast<int>(patches.size()), spec_.in_channels, first.height, first.width);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const PlanarImage& p = *patches[i];
    if (p.channels != spec_.in_channels || !p.same_geometry(first))
      throw ShapeError("segmenter: patch has " + std::to_string(p.channels) + " channels, model expects " +
                       std::to_string(spec_.in_channels));
    auto dst = x.sample(static_cast<int>(i));
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = (p.data[k] - spec_.input_mean) * spec_.input_scale;
  }
  return x;
}

SegmentationNet::Cache SegmentationNet::forward(const Tensor4& x) const {
  if (x.c != spec_.in_channels) throw ShapeError("segmenter: input channel count mismatch");
  if (x.h < 8 || x.w < 8) throw ShapeError("segmenter: input must be at least 8x8");
  Cache cache;
  const Tensor4* in = &x;
  for (int b = 0; b < 4; ++b) {
    cache.blocks[b] = blocks_[b].forward(params_, *in, false, 0);
    in = &cache.blocks[b].output();
  }
  const int first_head = spec_.full_resolution_skip ? 0 : 1;
  for (int b = first_head; b < 4; ++b) cache.heads[b] = heads_[b].forward(params_, cache.blocks[b].output(), false, 0);

  // stride 8 -> 4 -> 2 -> 1
  Tensor4 cur = cache.heads[3].output();
  for (int level = 2; level >= 0; --level) {
    const Tensor4& ref = cache.blocks[level].output();
    Tensor4 up = upsample_bilinear_forward(cur, ref.h, ref.w);
    if (level >= first_head) add_into(up, cache.heads[level].output());
    cache.fused[2 - level] = up;
    cur = std::move(up);
  }
  cache.logits = std::move(cur);
  return cache;
}

Tensor4 SegmentationNet::backward(const Cache& cache, const Tensor4& grad_logits, bool need_input_grad) {
  if (!grad_logits.same_shape(cache.logits)) throw ShapeError("segmenter backward: gradient shape mismatch");
  const int first_head = spec_.full_resolution_skip ? 0 : 1;
  std::array<Tensor4, 4> head_grad;
  Tensor4 g = grad_logits;
  for (int level = 0; level <= 2; ++level) {
    if (level >= first_head) head_grad[level] = g;
    const Tensor4& below = level == 2 ? cache.heads[3].output() : cache.fused[2 - level - 1];
    g = upsample_bilinear_backward(below, g);
  }
  head_grad[3] = std::move(g);

  std::array<Tensor4, 4> feat_grad;
  for (int b = first_head; b < 4; ++b) feat_grad[b] = heads_[b].backward(params_, cache.heads[b], head_grad[b]);
  Tensor4 carry;
  for (int b = 3; b >= 0; --b) {
    Tensor4 gb = feat_grad[b].size() ? std::move(feat_grad[b]) : Tensor4();
    if (carry.size()) {
      if (gb.size()) add_into(gb, carry);
      else gb = std::move(carry);
    }
    if (!gb.size()) gb = Tensor4(cache.blocks[b].output().n, cache.blocks[b].output().c, cache.blocks[b].output().h,
                                 cache.blocks[b].output().w);
    carry = blocks_[b].backward(params_, cache.blocks[b], gb, b > 0 || need_input_grad);
  }
  return carry;
}

Tensor4 SegmentationNet::predict(const PlanarImage& patch) const {
  const Tensor4 x = to_input({&patch});
  return softmax(forward(x).logits);
}

void SegmentationNet::save(const std::string& path) const {
  nlohmann::json header{{"kind", "segmenter"}, {"spec", spec_to_json(spec_)}, {"seed", seed_}, {"trained", trained_}};
  write_checkpoint(path, header, params_);
}

SegmentationNet SegmentationNet::load(const std::string& path) {
  const CheckpointData data = read_checkpoint(path);
  if (data.header.value("kind", "") != "segmenter") throw ModelError("checkpoint is not a segmenter: " + path);
  SegmentationNet net(spec_from_json(data.header.at("spec")), data.header.at("seed").get<std::uint64_t>());
  apply_checkpoint(data, net.params_);
  net.trained_ = data.header.at("trained").get<bool>();
  return net;
}

namespace {

std::vector<int> label_vector(const BinaryMask& m) {
  std::vector<int> out(m.bits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.bits[i] ? 1 : 0;
  return out;
}

}  // namespace

SegTrainReport train_segmenter(SegmentationNet& net, const std::vector<PlanarImage>& patches,
                               const std::vector<BinaryMask>& vessels, const SegTrainConfig& config) {
  if (patches.empty()) throw DegenerateInputError("train_segmenter: no training patches");
  if (patches.size() != vessels.size()) throw ShapeError("train_segmenter: patch and label counts differ");
  for (std::size_t i = 0; i < patches.size(); ++i)
    if (!vessels[i].matches(patches[i]))
      throw ShapeError("train_segmenter: label " + std::to_string(i) + " does not match its patch");
  if (config.epochs < 0 || config.batch_size <= 0) throw ParameterError("train_segmenter: bad epochs or batch size");

  SegTrainReport report;
  std::vector<std::vector<int>> labels;
  for (const auto& v : vessels) labels.push_back(label_vector(v));
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double scale = config.batch_reduction == Reduction::Mean ? 1.0 / static_cast<double>(stop - start) : 1.0;
      net.params().zero_grad();
      double loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        const auto cache = net.forward(net.to_input({&patches[idx]}));
        LossResult lr = softmax_cross_entropy(cache.logits, labels[idx], Reduction::Sum);
        for (double& g : lr.grad.data) g *= scale;
        loss += scale * lr.loss;
        net.backward(cache, lr.grad);
      }
      if (!std::isfinite(loss)) throw ModelError("train_segmenter: non-finite loss at epoch " + std::to_string(epoch));
      sgd_momentum_step(net.params(), config.lr, config.momentum);
      report.losses.push_back(loss);
      ++report.updates;
    }
  }
  if (config.epochs > 0) net.set_trained(true);
  report.pixel_accuracy = pixel_accuracy(net, patches, vessels);
  return report;
}

double pixel_accuracy(const SegmentationNet& net, const std::vector<PlanarImage>& patches,
                      const std::vector<BinaryMask>& vessels) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Tensor4 prob = net.predict(patches[i]);
    const std::size_t hw = prob.plane_size();
    for (std::size_t p = 0; p < hw; ++p) {
      const bool vessel = prob.data[hw + p] >= 0.5;
      hit += vessel == (vessels[i].bits[p] != 0);
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace redlesion::nnet
