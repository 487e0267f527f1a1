#include "redlesion/nnet/detnet.hpp"

#include "redlesion/error.hpp"
#include "redlesion/nnet/checkpoint.hpp"

namespace redlesion::nnet {

namespace {

nlohmann::json spec_to_json(const DetNetSpec& s) {
  return {{"in_channels", s.in_channels}, {"widths", s.widths},           {"pool_size", s.pool_size},
          {"hidden", s.hidden},           {"dropout", s.dropout},         {"cls_init_std", s.cls_init_std},
          {"reg_init_std", s.reg_init_std}, {"input_mean", s.input_mean}, {"input_scale", s.input_scale},
          {"per_patch_mean", s.per_patch_mean}};
}

DetNetSpec spec_from_json(const nlohmann::json& j) {
  DetNetSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.widths = j.at("widths").get<std::array<int, 4>>();
  s.pool_size = j.at("pool_size").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.dropout = j.at("dropout").get<double>();
  s.cls_init_std = j.at("cls_init_std").get<double>();
  s.reg_init_std = j.at("reg_init_std").get<double>();
  s.input_mean = j.at("input_mean").get<double>();
  s.input_scale = j.at("input_scale").get<double>();
  s.per_patch_mean = j.at("per_patch_mean").get<bool>();
  return s;
}

constexpr double kScale = 1.0 / DetNetSpec::kStride;

}  // namespace

DetectorNet::DetectorNet(const DetNetSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  if (spec.in_channels <= 0 || spec.pool_size <= 0 || spec.hidden <= 0) throw ParameterError("detector: bad spec");
  const auto& w = spec.widths;
  backbone_ = Sequential({LayerSpec::conv(spec.in_channels, w[0]), LayerSpec::relu(), LayerSpec::maxpool(),
                          LayerSpec::conv(w[0], w[1]), LayerSpec::relu(), LayerSpec::maxpool(),
                          LayerSpec::conv(w[1], w[2]), LayerSpec::relu(), LayerSpec::maxpool(),
                          LayerSpec::conv(w[2], w[3]), LayerSpec::relu()},
                         params_, "backbone");
  const int pooled = w[3] * spec.pool_size * spec.pool_size;
  trunk_ = Sequential({LayerSpec::linear(pooled, spec.hidden), LayerSpec::relu(), LayerSpec::dropout(spec.dropout),
                       LayerSpec::linear(spec.hidden, spec.hidden), LayerSpec::relu(), LayerSpec::dropout(spec.dropout)},
                      params_, "fc");
  cls_ = Sequential({LayerSpec::linear(spec.hidden, 2, spec.cls_init_std)}, params_, "cls");
  reg_ = Sequential({LayerSpec::linear(spec.hidden, 4, spec.reg_init_std)}, params_, "reg");
  params_.initialize(seed);
}

Tensor4 DetectorNet::to_input(const PlanarImage& patch) const {
  if (patch.channels != spec_.in_channels)
    throw ShapeError("detector: patch has " + std::to_string(patch.channels) + " channels, model expects " +
                     std::to_string(spec_.in_channels));
  if (patch.height < DetNetSpec::kStride || patch.width < DetNetSpec::kStride)
    throw ShapeError("detector: patch smaller than the backbone stride");
  double mean = spec_.input_mean;
  if (spec_.per_patch_mean) {
    double s = 0.0;
    for (float v : patch.data) s += v;
    mean = s / static_cast<double>(patch.data.size());
  }
  Tensor4 x(1, patch.channels, patch.height, patch.width);
  for (std::size_t k = 0; k < x.size(); ++k) x.data[k] = (patch.data[k] - mean) * spec_.input_scale;
  return x;
}

DetectorNet::Cache DetectorNet::forward(const std::vector<Tensor4>& images, const std::vector<std::vector<RoiBox>>& rois,
                                        bool train, std::uint64_t seed) const {
  if (images.size() != rois.size()) throw ShapeError("detector: one ROI list per image is required");
  Cache cache;
  int total = 0;
  for (const auto& r : rois) total += static_cast<int>(r.size());
  const int pooled_len = spec_.widths[3] * spec_.pool_size * spec_.pool_size;
  Tensor4 stacked(total, spec_.widths[3], spec_.pool_size, spec_.pool_size);
  int offset = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].n != 1) throw ShapeError("detector: images are passed one per tensor");
    cache.backbone.push_back(backbone_.forward(params_, images[i], train, 0));
    std::vector<PooledRoi> pr;
    for (const RoiBox& b : rois[i]) pr.push_back({0, b});
    cache.pooled.push_back(roi_pool_forward(cache.backbone.back().output(), pr, spec_.pool_size, spec_.pool_size, kScale));
    const Tensor4& out = cache.pooled.back().output;
    std::copy(out.data.begin(), out.data.end(), stacked.data.begin() + static_cast<std::ptrdiff_t>(offset) * pooled_len);
    cache.roi_counts.push_back(static_cast<int>(rois[i].size()));
    offset += static_cast<int>(rois[i].size());
  }
  cache.trunk = trunk_.forward(params_, stacked, train, mix_seed(seed, 1));
  cache.cls = cls_.forward(params_, cache.trunk.output(), train, 0);
  cache.reg = reg_.forward(params_, cache.trunk.output(), train, 0);
  return cache;
}

void DetectorNet::backward(const Cache& cache, const Tensor4& grad_logits, const Tensor4& grad_offsets) {
  Tensor4 g = cls_.backward(params_, cache.cls, grad_logits);
  const Tensor4 gr = reg_.backward(params_, cache.reg, grad_offsets);
  for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += gr.data[k];
  const Tensor4 gp = trunk_.backward(params_, cache.trunk, g);
  const std::size_t pooled_len = gp.sample_size();
  int offset = 0;
  for (std::size_t i = 0; i < cache.backbone.size(); ++i) {
    const RoiPoolResult& pool = cache.pooled[i];
    const int count = cache.roi_counts[i];
    if (count == 0) continue;
    Tensor4 slice(count, gp.c, gp.h, gp.w);
    std::copy(gp.data.begin() + static_cast<std::ptrdiff_t>(offset * pooled_len),
              gp.data.begin() + static_cast<std::ptrdiff_t>((offset + count) * pooled_len), slice.data.begin());
    const Tensor4 gfeat = roi_pool_backward(cache.backbone[i].output(), pool, slice);
    backbone_.backward(params_, cache.backbone[i], gfeat, false);
    offset += count;
  }
}

Tensor4 DetectorNet::features(const Tensor4& image) const {
  return backbone_.forward(params_, image, false, 0).output();
}

DetectorNet::HeadOutput DetectorNet::score_rois(const Tensor4& features, const std::vector<RoiBox>& rois) const {
  std::vector<PooledRoi> pr;
  for (const RoiBox& b : rois) pr.push_back({0, b});
  const RoiPoolResult pooled = roi_pool_forward(features, pr, spec_.pool_size, spec_.pool_size, kScale);
  const SequentialCache trunk = trunk_.forward(params_, pooled.output, false, 0);
  HeadOutput out;
  out.logits = cls_.forward(params_, trunk.output(), false, 0).output();
  out.offsets = reg_.forward(params_, trunk.output(), false, 0).output();
  return out;
}

void DetectorNet::save(const std::string& path, const nlohmann::json& extra) const {
  nlohmann::json header{{"kind", "detector"}, {"spec", spec_to_json(spec_)}, {"seed", seed_}, {"trained", trained_},
                        {"extra", extra}};
  write_checkpoint(path, header, params_);
}

DetectorNet DetectorNet::load(const std::string& path, nlohmann::json* extra) {
  const CheckpointData data = read_checkpoint(path);
  if (data.header.value("kind", "") != "detector") throw ModelError("checkpoint is not a detector: " + path);
  DetectorNet net(spec_from_json(data.header.at("spec")), data.header.at("seed").get<std::uint64_t>());
  apply_checkpoint(data, net.params_);
  net.trained_ = data.header.at("trained").get<bool>();
  if (extra) *extra = data.header.value("extra", nlohmann::json::object());
  return net;
}

}  // namespace redlesion::nnet
