#include "redlesion/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "redlesion/error.hpp"
#include "redlesion/log.hpp"

namespace redlesion {

using nnet::Tensor4;

BoxOffsets encode_offsets(const RoiBox& candidate, const RoiBox& gt) {
  if (!candidate.valid() || !gt.valid()) throw ParameterError("encode_offsets: boxes must have positive size");
  return {(gt.r - candidate.r) / candidate.h, (gt.c - candidate.c) / candidate.w, std::log(gt.h / candidate.h),
          std::log(gt.w / candidate.w)};
}

RoiBox decode_offsets(const RoiBox& candidate, const BoxOffsets& t) {
  if (!candidate.valid()) throw ParameterError("decode_offsets: candidate must have positive size");
  return {candidate.r + t[0] * candidate.h, candidate.c + t[1] * candidate.w, candidate.h * std::exp(t[2]),
          candidate.w * std::exp(t[3])};
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

std::vector<LabeledRoi> label_candidates(const std::vector<RoiBox>& candidates, const std::vector<RoiBox>& gt,
                                         double iou_threshold) {
  std::vector<LabeledRoi> out;
  out.reserve(candidates.size());
  for (const RoiBox& c : candidates) {
    LabeledRoi l;
    l.box = c;
    double best = 0.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(c, gt[g]);
      if (v > best) {
        best = v;
        l.gt_index = static_cast<int>(g);
      }
    }
    if (best > iou_threshold) {
      l.u = 1;
      l.v = encode_offsets(c, gt[static_cast<std::size_t>(l.gt_index)]);
    } else {
      l.gt_index = -1;
    }
    out.push_back(l);
  }
  return out;
}

double multitask_loss(const std::array<double, 2>& p, int u, const BoxOffsets& t, const BoxOffsets& v) {
  if (u != 0 && u != 1) throw ParameterError("multitask_loss: label must be 0 or 1");
  double pu = p[static_cast<std::size_t>(u)];
  if (pu < 1e-12) {
    log_warning("multitask_loss: true-class probability clamped to 1e-12");
    pu = 1e-12;
  }
  double loss = -std::log(pu);
  if (u == 1)
    for (int k = 0; k < 4; ++k) loss += smooth_l1(t[k] - v[k]);
  return loss;
}

std::vector<int> choose_images(const std::vector<std::vector<LabeledRoi>>& pool, int n_images, std::mt19937_64& rng) {
  if (n_images <= 0) throw ParameterError("choose_images: n_images must be positive");
  std::vector<int> usable;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!pool[i].empty()) usable.push_back(static_cast<int>(i));
  if (usable.empty()) throw DegenerateInputError("sample_minibatch: no image has any candidate");
  // Partial Fisher-Yates; images without candidates never enter the draw.
  const int n = std::min<int>(n_images, static_cast<int>(usable.size()));
  for (int k = 0; k < n; ++k) {
    std::uniform_int_distribution<int> pick(k, static_cast<int>(usable.size()) - 1);
    std::swap(usable[static_cast<std::size_t>(k)], usable[static_cast<std::size_t>(pick(rng))]);
  }
  usable.resize(static_cast<std::size_t>(n));
  return usable;
}

namespace {

// Draws `count` items: without replacement while the stratum lasts, then with.
void draw(const std::vector<MinibatchItem>& stratum, int count, std::mt19937_64& rng, std::vector<MinibatchItem>& out) {
  if (count <= 0 || stratum.empty()) return;
  std::vector<MinibatchItem> s = stratum;
  const int unique = std::min<int>(count, static_cast<int>(s.size()));
  for (int k = 0; k < unique; ++k) {
    std::uniform_int_distribution<int> pick(k, static_cast<int>(s.size()) - 1);
    std::swap(s[static_cast<std::size_t>(k)], s[static_cast<std::size_t>(pick(rng))]);
    out.push_back(s[static_cast<std::size_t>(k)]);
  }
  std::uniform_int_distribution<int> any(0, static_cast<int>(s.size()) - 1);
  for (int k = unique; k < count; ++k) out.push_back(s[static_cast<std::size_t>(any(rng))]);
}

}  // namespace

Minibatch sample_rois(const std::vector<std::vector<LabeledRoi>>& pool, const std::vector<int>& images,
                      const SamplingConfig& config, std::mt19937_64& rng) {
  if (config.r_rois <= 0) throw ParameterError("sample_rois: r_rois must be positive");
  if (!(config.pos_fraction >= 0.0 && config.pos_fraction <= 1.0))
    throw ParameterError("sample_rois: pos_fraction must be in [0, 1]");
  Minibatch mb;
  mb.images = images;
  std::vector<MinibatchItem> pos, neg;
  for (int img : images)
    for (std::size_t r = 0; r < pool[static_cast<std::size_t>(img)].size(); ++r)
      (pool[static_cast<std::size_t>(img)][r].u == 1 ? pos : neg).push_back({img, static_cast<int>(r)});
  if (pos.empty() && neg.empty()) return mb;
  const int target_pos = static_cast<int>(std::floor(config.pos_fraction * config.r_rois));
  int n_pos = std::min<int>(target_pos, static_cast<int>(pos.size()));
  int n_neg = config.r_rois - n_pos;
  if (neg.empty()) {
    n_pos = config.r_rois;
    n_neg = 0;
  }
  draw(pos, n_pos, rng, mb.items);
  draw(neg, n_neg, rng, mb.items);
  mb.positives = n_pos;
  return mb;
}

Minibatch sample_minibatch(const std::vector<std::vector<LabeledRoi>>& pool, const SamplingConfig& config,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<int> images = choose_images(pool, config.n_images, rng);
  return sample_rois(pool, images, config, rng);
}

std::vector<double> lesion_probabilities(const Tensor4& logits) {
  if (logits.c != 2 || logits.h != 1 || logits.w != 1) throw ShapeError("lesion_probabilities: expected (R, 2, 1, 1) logits");
  std::vector<double> p(static_cast<std::size_t>(logits.n));
  for (int i = 0; i < logits.n; ++i) {
    const double z0 = logits.data[2 * static_cast<std::size_t>(i)];
    const double z1 = logits.data[2 * static_cast<std::size_t>(i) + 1];
    p[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(z0 - z1));
  }
  return p;
}

BatchLoss detection_loss(const Tensor4& logits, const Tensor4& offsets, const std::vector<LabeledRoi>& rois) {
  const int r = static_cast<int>(rois.size());
  if (logits.n != r || offsets.n != r || offsets.sample_size() != 4) throw ShapeError("detection_loss: head shapes do not match ROIs");
  BatchLoss out;
  out.grad_logits = Tensor4(r, 2, 1, 1);
  out.grad_offsets = Tensor4(r, 4, 1, 1);
  if (r == 0) return out;
  const std::vector<double> p1 = lesion_probabilities(logits);
  const double inv = 1.0 / r;
  for (int i = 0; i < r; ++i) {
    const LabeledRoi& roi = rois[static_cast<std::size_t>(i)];
    const std::array<double, 2> p{1.0 - p1[static_cast<std::size_t>(i)], p1[static_cast<std::size_t>(i)]};
    BoxOffsets t;
    for (int k = 0; k < 4; ++k) t[k] = offsets.data[4 * static_cast<std::size_t>(i) + k];
    out.loss += inv * multitask_loss(p, roi.u, t, roi.v);
    out.grad_logits.data[2 * static_cast<std::size_t>(i)] = inv * (p[0] - (roi.u == 0 ? 1.0 : 0.0));
    out.grad_logits.data[2 * static_cast<std::size_t>(i) + 1] = inv * (p[1] - (roi.u == 1 ? 1.0 : 0.0));
    if (roi.u == 1)
      for (int k = 0; k < 4; ++k) out.grad_offsets.data[4 * static_cast<std::size_t>(i) + k] = inv * smooth_l1_grad(t[k] - roi.v[k]);
  }
  return out;
}

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxLogScale = 4.0;  // caps decoded growth at e^4 per axis

}  // namespace

PlanarImage rotate_patch(const PlanarImage& patch, double angle_deg, float fill) {
  PlanarImage out(patch.height, patch.width, patch.channels, fill);
  const double a = angle_deg * kPi / 180.0;
  const double cs = std::cos(a), sn = std::sin(a);
  const double cr = 0.5 * patch.height, cc = 0.5 * patch.width;
  for (int y = 0; y < patch.height; ++y)
    for (int x = 0; x < patch.width; ++x) {
      const double dr = y + 0.5 - cr, dc = x + 0.5 - cc;
      // inverse of the forward map (dc', dr') = (dc cos + dr sin, dr cos - dc sin)
      const double sc = dc * cs - dr * sn + cc;
      const double sr = dr * cs + dc * sn + cr;
      const int iy = static_cast<int>(std::floor(sr));
      const int ix = static_cast<int>(std::floor(sc));
      if (iy < 0 || iy >= patch.height || ix < 0 || ix >= patch.width) continue;
      for (int ch = 0; ch < patch.channels; ++ch) out.at(ch, y, x) = patch.at(ch, iy, ix);
    }
  return out;
}

RoiBox rotate_box(const RoiBox& box, double angle_deg, int height, int width) {
  const double a = angle_deg * kPi / 180.0;
  const double cs = std::cos(a), sn = std::sin(a);
  const double cr = 0.5 * height, cc = 0.5 * width;
  double top = 1e300, bottom = -1e300, left = 1e300, right = -1e300;
  for (double r : {box.top(), box.bottom()})
    for (double c : {box.left(), box.right()}) {
      const double dr = r - cr, dc = c - cc;
      const double nc = dc * cs + dr * sn + cc;
      const double nr = dr * cs - dc * sn + cr;
      top = std::min(top, nr);
      bottom = std::max(bottom, nr);
      left = std::min(left, nc);
      right = std::max(right, nc);
    }
  return clamped(RoiBox::from_edges(top, left, bottom, right), height, width);
}

namespace {

struct WorkingSample {
  PlanarImage patch;
  std::vector<RoiBox> candidates;
  std::vector<RoiBox> gt;
};

bool centre_inside(const RoiBox& b, int height, int width) {
  return b.r >= 0.0 && b.r < height && b.c >= 0.0 && b.c < width;
}

WorkingSample crop_tile(const DetTrainingSample& s, const std::vector<RoiBox>& candidates,
                        const std::vector<LabeledRoi>& labels, int tile, std::mt19937_64& rng) {
  WorkingSample w;
  const int th = std::min(tile, s.patch.height);
  const int tw = std::min(tile, s.patch.width);
  // Centre the tile on a candidate so every tile has something to label; half
  // of the tiles go to a positive one, otherwise lesions would be rare in them.
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i].u == 1) positives.push_back(i);
  std::size_t anchor_index;
  if (!positives.empty() && std::uniform_int_distribution<int>(0, 1)(rng) == 1)
    anchor_index = positives[std::uniform_int_distribution<std::size_t>(0, positives.size() - 1)(rng)];
  else
    anchor_index = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
  const RoiBox& anchor = candidates[anchor_index];
  std::uniform_int_distribution<int> jitter(-th / 4, th / 4);
  const int r0 = std::clamp(static_cast<int>(std::lround(anchor.r)) - th / 2 + jitter(rng), 0, s.patch.height - th);
  const int c0 = std::clamp(static_cast<int>(std::lround(anchor.c)) - tw / 2 + jitter(rng), 0, s.patch.width - tw);
  w.patch = PlanarImage(th, tw, s.patch.channels);
  for (int ch = 0; ch < s.patch.channels; ++ch)
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) w.patch.at(ch, y, x) = s.patch.at(ch, y + r0, x + c0);
  auto shift = [&](const RoiBox& b) { return RoiBox{b.r - r0, b.c - c0, b.h, b.w}; };
  for (const RoiBox& b : candidates) {
    const RoiBox m = shift(b);
    if (centre_inside(m, th, tw)) w.candidates.push_back(m);
  }
  for (const RoiBox& b : s.gt) {
    const RoiBox m = shift(b);
    if (centre_inside(m, th, tw)) w.gt.push_back(clamped(m, th, tw));
  }
  return w;
}

void rotate_sample(WorkingSample& s, double angle, float fill) {
  const int h = s.patch.height, w = s.patch.width;
  s.patch = rotate_patch(s.patch, angle, fill);
  auto rot = [&](std::vector<RoiBox>& boxes) {
    std::vector<RoiBox> kept;
    for (const RoiBox& b : boxes) {
      const RoiBox r = rotate_box(b, angle, h, w);
      if (r.valid() && centre_inside(r, h, w)) kept.push_back(r);
    }
    boxes = std::move(kept);
  };
  rot(s.candidates);
  rot(s.gt);
}

std::vector<RoiBox> extend_all(const std::vector<RoiBox>& boxes, double pixels) {
  std::vector<RoiBox> out;
  out.reserve(boxes.size());
  for (const RoiBox& b : boxes) out.push_back(extended(b, pixels));
  return out;
}

}  // namespace

DetTrainReport train_stream(nnet::DetectorNet& net, LesionClass stream, const std::vector<DetTrainingSample>& data,
                            const DetTrainConfig& config) {
  if (data.empty()) throw DegenerateInputError("train_stream: no training samples");
  if (config.iterations < 0) throw ParameterError("train_stream: negative iteration count");
  for (const auto& s : data)
    if (s.patch.channels != net.spec().in_channels) throw ShapeError("train_stream: patch channel count does not match model");

  if (config.normalization == InputNormalization::OverallMean) {
    double sum = 0.0, count = 0.0;
    for (const auto& s : data) {
      for (float v : s.patch.data) sum += v;
      count += static_cast<double>(s.patch.data.size());
    }
    net.set_input_normalization(sum / count, false);
  } else if (config.normalization == InputNormalization::PerPatchMean) {
    net.set_input_normalization(net.spec().input_mean, true);
  }

  // Training ROIs: the candidates plus each ground-truth box and jittered
  // copies of it. A lesion usually yields a single candidate, so without these
  // a minibatch holds one or two positives among R.
  std::mt19937_64 jitter_rng(nnet::mix_seed(config.seed, 9));
  std::uniform_real_distribution<double> jitter(-config.gt_jitter_scale, config.gt_jitter_scale);
  std::vector<std::vector<RoiBox>> rois_of(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    rois_of[i] = data[i].candidates;
    if (config.gt_jitter < 0) continue;
    for (const RoiBox& g : data[i].gt) {
      rois_of[i].push_back(g);
      for (int k = 0; k < config.gt_jitter; ++k) {
        RoiBox b{g.r + jitter(jitter_rng) * g.h, g.c + jitter(jitter_rng) * g.w, g.h * std::exp(jitter(jitter_rng)),
                 g.w * std::exp(jitter(jitter_rng))};
        rois_of[i].push_back(clamped(b, data[i].patch.height, data[i].patch.width));
      }
    }
  }

  // Static pool: used for image selection and, without tiles or rotation, for labels.
  std::vector<std::vector<LabeledRoi>> pool;
  for (std::size_t i = 0; i < data.size(); ++i)
    pool.push_back(label_candidates(extend_all(rois_of[i], config.box_extend), extend_all(data[i].gt, config.box_extend),
                                    config.positive_iou));

  DetTrainReport report;
  std::mt19937_64 rng(config.seed);
  std::mt19937_64 aug_rng(nnet::mix_seed(config.seed, 7));
  const int decay_at = static_cast<int>(std::floor(config.lr_decay_at * config.iterations));
  const float fill = static_cast<float>(net.spec().input_mean);

  for (int it = 0; it < config.iterations; ++it) {
    const double lr = it >= decay_at ? config.lr * config.lr_decay : config.lr;
    const std::vector<int> chosen = choose_images(pool, config.sampling.n_images, rng);
    std::vector<std::vector<LabeledRoi>> local;
    std::vector<Tensor4> inputs;
    int rotated = 0;
    for (int idx : chosen) {
      const DetTrainingSample& s = data[static_cast<std::size_t>(idx)];
      const bool tiled = config.tile_size > 0 && (s.patch.height > config.tile_size || s.patch.width > config.tile_size);
      int angle_index = 0;
      if (config.augment && !config.angles.empty()) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(config.angles.size()));
        angle_index = pick(aug_rng);
      }
      if (!tiled && angle_index == 0) {
        local.push_back(pool[static_cast<std::size_t>(idx)]);
        inputs.push_back(net.to_input(s.patch));
        continue;
      }
      const auto& rois_here = rois_of[static_cast<std::size_t>(idx)];
      WorkingSample w = tiled ? crop_tile(s, rois_here, pool[static_cast<std::size_t>(idx)], config.tile_size, rng)
                              : WorkingSample{s.patch, rois_here, s.gt};
      if (angle_index > 0) {
        rotate_sample(w, config.angles[static_cast<std::size_t>(angle_index - 1)], fill);
        ++rotated;
      }
      local.push_back(label_candidates(extend_all(w.candidates, config.box_extend), extend_all(w.gt, config.box_extend),
                                       config.positive_iou));
      inputs.push_back(net.to_input(w.patch));
    }
    std::vector<int> local_ids(chosen.size());
    std::iota(local_ids.begin(), local_ids.end(), 0);
    const Minibatch mb = sample_rois(local, local_ids, config.sampling, rng);
    report.rotated.push_back(rotated);
    if (mb.items.empty()) {
      report.losses.push_back(report.losses.empty() ? 0.0 : report.losses.back());
      continue;
    }
    std::vector<std::vector<RoiBox>> rois(chosen.size());
    std::vector<LabeledRoi> ordered;
    for (std::size_t k = 0; k < chosen.size(); ++k)
      for (const MinibatchItem& item : mb.items)
        if (item.image == static_cast<int>(k)) {
          const LabeledRoi& l = local[k][static_cast<std::size_t>(item.roi)];
          rois[k].push_back(l.box);
          ordered.push_back(l);
        }
    const auto cache = net.forward(inputs, rois, true, nnet::mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(it)));
    const BatchLoss loss = detection_loss(cache.logits(), cache.offsets(), ordered);
    if (!std::isfinite(loss.loss))
      throw ModelError("train_stream(" + std::string(to_string(stream)) + "): non-finite loss at iteration " + std::to_string(it));
    net.params().zero_grad();
    net.backward(cache, loss.grad_logits, loss.grad_offsets);
    nnet::sgd_momentum_step(net.params(), lr, config.momentum);
    report.losses.push_back(loss.loss);
    ++report.iterations;
  }
  if (config.iterations > 0) net.set_trained(true);
  return report;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.r != b.box.r) return a.box.r < b.box.r;
    return a.box.c < b.box.c;
  });
  std::vector<Detection> kept;
  for (const Detection& d : detections) {
    bool suppressed = false;
    for (const Detection& k : kept)
      if (iou(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> detect_stream(const PlanarImage& patch, const std::vector<RoiBox>& candidates,
                                     const nnet::DetectorNet& model, LesionClass stream, const DetectConfig& config) {
  if (!model.trained()) throw ModelError("detect_stream: detector model has not been trained");
  if (candidates.empty()) return {};
  const std::vector<RoiBox> rois = extend_all(candidates, config.box_extend);
  const Tensor4 feats = model.features(model.to_input(patch));
  const auto head = model.score_rois(feats, rois);
  const std::vector<double> p = lesion_probabilities(head.logits);
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < rois.size(); ++i) {
    if (!(p[i] >= config.theta)) continue;
    RoiBox box = rois[i];
    if (config.regress) {
      BoxOffsets t;
      for (int k = 0; k < 4; ++k) t[k] = head.offsets.data[4 * i + k];
      t[2] = std::min(t[2], kMaxLogScale);
      t[3] = std::min(t[3], kMaxLogScale);
      box = decode_offsets(box, t);
    }
    box = clamped(shrunk(box, config.box_extend), patch.height, patch.width);
    dets.push_back({box, p[i], stream});
  }
  return nms(std::move(dets), config.nms_iou);
}

}  // namespace redlesion
