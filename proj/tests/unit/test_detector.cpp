#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "redlesion/detector.hpp"
#include "redlesion/error.hpp"

using namespace redlesion;

namespace {

nnet::DetNetSpec tiny_det() {
  nnet::DetNetSpec s;
  s.widths = {3, 4, 4, 3};
  s.hidden = 6;
  s.pool_size = 2;
  return s;
}

std::vector<double> flat_params(const nnet::ParamSet& ps) {
  std::vector<double> all;
  for (const auto& p : ps) all.insert(all.end(), p.value.begin(), p.value.end());
  return all;
}

LabeledRoi roi(int u) {
  LabeledRoi l;
  l.box = {10, 10, 5, 5};
  l.u = u;
  return l;
}

std::vector<Detection> random_detections(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> pos(0, 60), size(3, 20), score(0, 1);
  std::vector<Detection> d(static_cast<std::size_t>(n));
  for (auto& x : d) {
    x.box = {pos(rng), pos(rng), size(rng), size(rng)};
    x.score = std::round(score(rng) * 20) / 20;  // ties on purpose
  }
  return d;
}

// Dark discs on a noisy background, gt boxes and a few decoy candidates.
std::vector<DetTrainingSample> toy_samples(int n, int size) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> noise(-8, 8);
  std::uniform_real_distribution<double> where(8, size - 8);
  std::vector<DetTrainingSample> out;
  for (int i = 0; i < n; ++i) {
    DetTrainingSample s;
    s.patch = PlanarImage(size, size, 3);
    for (float& v : s.patch.data) v = 130.0f + noise(rng);
    const double r = where(rng), c = where(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if ((y + 0.5 - r) * (y + 0.5 - r) + (x + 0.5 - c) * (x + 0.5 - c) < 9.0)
          for (int ch = 0; ch < 3; ++ch) s.patch.at(ch, y, x) = 50.0f;
    s.gt.push_back({r, c, 6, 6});
    s.candidates.push_back({r, c, 6, 6});
    s.candidates.push_back({where(rng), where(rng), 5, 5});
    s.candidates.push_back({where(rng), where(rng), 7, 7});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Offsets, ClosedFormsAndZero) {
  const RoiBox a{10, 20, 8, 6};
  for (double v : encode_offsets(a, a)) EXPECT_EQ(v, 0.0);
  const BoxOffsets t = encode_offsets(a, RoiBox{10, 20, 16, 6});
  EXPECT_NEAR(t[2], 0.6931, 1e-4);
  EXPECT_EQ(t[3], 0.0);
  const BoxOffsets s = encode_offsets(a, RoiBox{14, 17, 8, 6});
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], -0.5);
  EXPECT_THROW(encode_offsets(RoiBox{1, 1, 0, 3}, a), ParameterError);
}

TEST(Offsets, DecodeInvertsEncode) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(-50, 500), size(0.5, 80);
  for (int i = 0; i < 1000; ++i) {
    const RoiBox a{pos(rng), pos(rng), size(rng), size(rng)};
    const RoiBox b{pos(rng), pos(rng), size(rng), size(rng)};
    const RoiBox d = decode_offsets(a, encode_offsets(a, b));
    EXPECT_NEAR(d.r, b.r, 1e-9);
    EXPECT_NEAR(d.c, b.c, 1e-9);
    EXPECT_NEAR(d.h, b.h, 1e-9);
    EXPECT_NEAR(d.w, b.w, 1e-9);
  }
}

TEST(SmoothL1, Values) {
  EXPECT_EQ(smooth_l1(0.0), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(1.0), 0.5);
  EXPECT_DOUBLE_EQ(smooth_l1_grad(0.3), 0.3);
  EXPECT_DOUBLE_EQ(smooth_l1_grad(-4.0), -1.0);
}

TEST(Label, ExactMatchAndFarAway) {
  const std::vector<RoiBox> gt{{50, 50, 10, 10}};
  const auto l = label_candidates({{50, 50, 10, 10}, {200, 200, 10, 10}}, gt);
  EXPECT_EQ(l[0].u, 1);
  for (double v : l[0].v) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(l[0].gt_index, 0);
  EXPECT_EQ(l[1].u, 0);
  EXPECT_EQ(l[1].gt_index, -1);
}

TEST(Label, PicksTheBestOverlap) {
  // column shift d of a 10x10 box gives IoU (10-d)/(10+d)
  const RoiBox cand{50, 50, 10, 10};
  const RoiBox g06{50, 52.5, 10, 10};
  const RoiBox g07{50 - 30.0 / 17.0, 50, 10, 10};
  ASSERT_NEAR(iou(cand, g06), 0.6, 1e-12);
  ASSERT_NEAR(iou(cand, g07), 0.7, 1e-12);
  const auto l = label_candidates({cand}, {g06, g07});
  EXPECT_EQ(l[0].u, 1);
  EXPECT_EQ(l[0].gt_index, 1);
  EXPECT_NEAR(l[0].v[0], -3.0 / 17.0, 1e-12);
}

TEST(Label, ThresholdIsStrict) {
  const RoiBox cand{50, 50, 6, 6};
  const RoiBox half{50, 52, 6, 6};  // 24 / 48
  ASSERT_EQ(iou(cand, half), 0.5);
  EXPECT_EQ(label_candidates({cand}, {half}, 0.5)[0].u, 0);
  EXPECT_EQ(label_candidates({cand}, {half}, 0.49)[0].u, 1);
}

TEST(MultitaskLoss, Examples) {
  const BoxOffsets z{0, 0, 0, 0};
  EXPECT_EQ(multitask_loss({1.0, 0.0}, 0, {3, 3, 3, 3}, z), 0.0);
  EXPECT_EQ(multitask_loss({0.0, 1.0}, 1, z, z), 0.0);
  EXPECT_NEAR(multitask_loss({0.5, 0.5}, 1, {0.5, 0, 0, 0}, z), std::log(2.0) + 0.125, 1e-12);
  EXPECT_NEAR(multitask_loss({0.5, 0.5}, 1, {0.5, 0, 0, 0}, z), 0.8181, 1e-4);
  EXPECT_TRUE(std::isfinite(multitask_loss({1.0, 0.0}, 1, z, z)));
  EXPECT_THROW(multitask_loss({0.5, 0.5}, 2, z, z), ParameterError);
}

TEST(MultitaskLoss, NonNegativeAndZeroOnlyWhenPerfect) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1), off(-3, 3);
  for (int i = 0; i < 2000; ++i) {
    const double p1 = u(rng);
    const int label = static_cast<int>(i % 2);
    const BoxOffsets t{off(rng), off(rng), off(rng), off(rng)}, v{off(rng), off(rng), off(rng), off(rng)};
    const double l = multitask_loss({1 - p1, p1}, label, t, v);
    EXPECT_GE(l, 0.0);
    if (p1 > 0 && p1 < 1) {
      EXPECT_GT(l, 0.0);
    }
  }
}

TEST(Sampling, DefaultFractionCounts) {
  std::vector<std::vector<LabeledRoi>> pool(3);
  for (auto& img : pool)
    for (int k = 0; k < 80; ++k) img.push_back(roi(k % 2));
  const Minibatch mb = sample_minibatch(pool, SamplingConfig{}, 5);
  ASSERT_EQ(mb.items.size(), 64u);
  EXPECT_EQ(mb.images.size(), 2u);
  int pos = 0;
  for (const auto& it : mb.items) {
    pos += pool[static_cast<std::size_t>(it.image)][static_cast<std::size_t>(it.roi)].u;
    EXPECT_TRUE(std::find(mb.images.begin(), mb.images.end(), it.image) != mb.images.end());
  }
  EXPECT_EQ(pos, 16);
  EXPECT_EQ(mb.positives, 16);
}

TEST(Sampling, ScarcePositivesAllIncluded) {
  std::vector<std::vector<LabeledRoi>> pool(2);
  for (auto& img : pool) {
    img.push_back(roi(1));
    for (int k = 0; k < 40; ++k) img.push_back(roi(0));
  }
  const Minibatch mb = sample_minibatch(pool, SamplingConfig{}, 9);
  ASSERT_EQ(mb.items.size(), 64u);
  std::set<std::pair<int, int>> positives, negatives;
  for (const auto& it : mb.items)
    (pool[static_cast<std::size_t>(it.image)][static_cast<std::size_t>(it.roi)].u ? positives : negatives)
        .insert({it.image, it.roi});
  EXPECT_EQ(positives.size(), 2u);
  EXPECT_EQ(mb.positives, 2);
  EXPECT_EQ(negatives.size(), 62u);  // 80 available, so no repeats
}

TEST(Sampling, DeterministicPerSeedAndSkipsEmptyImages) {
  std::vector<std::vector<LabeledRoi>> pool(5);
  for (std::size_t i = 0; i < pool.size(); i += 2)
    for (int k = 0; k < 30; ++k) pool[i].push_back(roi(k % 3 == 0));
  const Minibatch a = sample_minibatch(pool, SamplingConfig{}, 3);
  const Minibatch b = sample_minibatch(pool, SamplingConfig{}, 3);
  EXPECT_EQ(a.items, b.items);
  EXPECT_EQ(a.images, b.images);
  for (int img : a.images) EXPECT_EQ(img % 2, 0);
  EXPECT_THROW(sample_minibatch(std::vector<std::vector<LabeledRoi>>(3), SamplingConfig{}, 1), DegenerateInputError);
}

TEST(Nms, OverlapExamples) {
  const Detection a{{50, 50, 10, 10}, 0.9, LesionClass::MA};
  const Detection b{{50, 51, 10, 10}, 0.8, LesionClass::MA};
  ASSERT_NEAR(iou(a.box, b.box), 90.0 / 110.0, 1e-12);
  const auto strict = nms({b, a}, 0.8);
  ASSERT_EQ(strict.size(), 1u);
  EXPECT_EQ(strict[0].score, 0.9);
  EXPECT_EQ(nms({a, b}, 0.9).size(), 2u);
  EXPECT_TRUE(nms({}, 0.5).empty());
}

TEST(Nms, TiesBrokenByPosition) {
  const Detection a{{50, 50, 10, 10}, 0.7, LesionClass::HM};
  const Detection b{{49, 50, 10, 10}, 0.7, LesionClass::HM};
  const auto kept = nms({a, b}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].box.r, 49);
}

TEST(Nms, AntichainSubsetAndIdempotent) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto in = random_detections(rng, 30);
    for (double thr : {0.3, 0.5, 0.8}) {
      const auto out = nms(in, thr);
      for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = i + 1; j < out.size(); ++j) EXPECT_LE(iou(out[i].box, out[j].box), thr);
        EXPECT_TRUE(std::any_of(in.begin(), in.end(), [&](const Detection& d) {
          return d.score == out[i].score && d.box.r == out[i].box.r && d.box.c == out[i].box.c;
        }));
      }
      const auto again = nms(out, thr);
      ASSERT_EQ(again.size(), out.size());
      for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(again[i].box.r, out[i].box.r);
    }
  }
}

TEST(Detect, ThresholdFilteringIsMonotone) {
  nnet::DetNetSpec spec = tiny_det();
  spec.cls_init_std = 1.0;  // spread the scores
  nnet::DetectorNet net(spec, 6);
  net.set_trained(true);
  const auto samples = toy_samples(1, 64);
  std::vector<RoiBox> cands;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(5, 59);
  for (int i = 0; i < 60; ++i) cands.push_back({pos(rng), pos(rng), 6, 6});
  DetectConfig cfg;
  cfg.nms_iou = 1.0;  // isolate the threshold
  std::size_t prev = cands.size() + 1;
  for (double theta : {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 0.95, 1.0}) {
    cfg.theta = theta;
    const auto d = detect_stream(samples[0].patch, cands, net, LesionClass::MA, cfg);
    EXPECT_LE(d.size(), prev);
    for (const auto& x : d) {
      EXPECT_GE(x.score, theta);
      EXPECT_LE(x.score, 1.0);
      EXPECT_GE(x.box.top(), 0.0);
      EXPECT_LE(x.box.bottom(), 64.0);
    }
    prev = d.size();
  }
  cfg.theta = 0.0;
  EXPECT_EQ(detect_stream(samples[0].patch, cands, net, LesionClass::MA, cfg).size(), cands.size());
  cfg.theta = 1.01;
  EXPECT_TRUE(detect_stream(samples[0].patch, cands, net, LesionClass::MA, cfg).empty());
  cfg.theta = 0.0;
  EXPECT_TRUE(detect_stream(samples[0].patch, {}, net, LesionClass::MA, cfg).empty());
}

TEST(Detect, UntrainedModelRejected) {
  const nnet::DetectorNet net(tiny_det(), 1);
  EXPECT_THROW(detect_stream(PlanarImage(32, 32, 3), {{10, 10, 5, 5}}, net, LesionClass::HM, DetectConfig{}), ModelError);
}

TEST(Train, ZeroIterationsKeepsInitialization) {
  nnet::DetectorNet net(tiny_det(), 4);
  const auto before = flat_params(net.params());
  DetTrainConfig cfg;
  cfg.iterations = 0;
  const DetTrainReport r = train_stream(net, LesionClass::MA, toy_samples(3, 48), cfg);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(flat_params(net.params()), before);
  EXPECT_FALSE(net.trained());
}

TEST(Train, AugmentationIsolation) {
  const auto data = toy_samples(4, 48);
  int with_rotation = 0, without_rotation = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    DetTrainConfig cfg;
    cfg.iterations = 1;
    cfg.seed = seed;
    nnet::DetectorNet on(tiny_det(), 2), off(tiny_det(), 2);
    const DetTrainReport a = train_stream(on, LesionClass::MA, data, cfg);
    cfg.augment = false;
    const DetTrainReport b = train_stream(off, LesionClass::MA, data, cfg);
    ASSERT_EQ(b.rotated[0], 0);
    if (a.rotated[0] == 0) {
      EXPECT_EQ(a.losses[0], b.losses[0]) << "seed " << seed;
      ++without_rotation;
    } else {
      EXPECT_NE(a.losses[0], b.losses[0]) << "seed " << seed;
      ++with_rotation;
    }
  }
  // both branches must actually be exercised
  EXPECT_GT(with_rotation, 0);
  EXPECT_GT(without_rotation, 0);
}

TEST(Train, LossFallsOnToyData) {
  nnet::DetectorNet net(tiny_det(), 3);
  DetTrainConfig cfg;
  cfg.iterations = 120;
  cfg.augment = false;
  const DetTrainReport r = train_stream(net, LesionClass::MA, toy_samples(4, 48), cfg);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += r.losses[static_cast<std::size_t>(i)];
    tail += r.losses[r.losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(tail, head);
  EXPECT_TRUE(net.trained());
}

TEST(Train, EmptyDataRejected) {
  nnet::DetectorNet net(tiny_det(), 3);
  EXPECT_THROW(train_stream(net, LesionClass::MA, {}, DetTrainConfig{}), DegenerateInputError);
}

TEST(Rotate, RightAngleBox) {
  const RoiBox b = rotate_box({20, 50, 10, 30}, 90.0, 100, 100);
  EXPECT_NEAR(b.r, 50, 1e-9);
  EXPECT_NEAR(b.c, 20, 1e-9);
  EXPECT_NEAR(b.h, 30, 1e-9);
  EXPECT_NEAR(b.w, 10, 1e-9);
}

TEST(Rotate, PatchContentStaysInsideRotatedBox) {
  for (double angle : {-45.0, 79.0, 90.0}) {
    PlanarImage p(80, 80, 1, 0.0f);
    const RoiBox b{30, 45, 12, 8};
    for (int y = 24; y < 36; ++y)
      for (int x = 41; x < 49; ++x) p.at(0, y, x) = 1.0f;
    const PlanarImage q = rotate_patch(p, angle, 0.0f);
    const RoiBox rb = rotate_box(b, angle, 80, 80);
    int marked = 0;
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 80; ++x)
        if (q.at(0, y, x) > 0.5f) {
          ++marked;
          EXPECT_GE(y + 0.5, rb.top() - 1.0) << angle;
          EXPECT_LE(y + 0.5, rb.bottom() + 1.0) << angle;
          EXPECT_GE(x + 0.5, rb.left() - 1.0) << angle;
          EXPECT_LE(x + 0.5, rb.right() + 1.0) << angle;
        }
    EXPECT_GT(marked, 60) << angle;
  }
}
