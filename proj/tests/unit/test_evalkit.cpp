#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "redlesion/error.hpp"
#include "redlesion/evalkit.hpp"

using namespace redlesion;

namespace {

Detection det(double r, double c, double score, double size = 6) { return {{r, c, size, size}, score, LesionClass::MA}; }

// A curve whose operating points sit exactly on the reference FPIs.
FrocCurve curve_at_references(const std::array<double, 7>& sens) {
  FrocCurve c;
  c.points.push_back({1.0, 0.0, 0.0});
  for (std::size_t k = 0; k < 7; ++k)
    c.points.push_back({0.9 - 0.1 * static_cast<double>(k), kCpmReferenceFpi[k], sens[k]});
  return c;
}

double brute_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

struct RandomCase {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<RoiBox>> gt;
};

RandomCase random_case(std::mt19937_64& rng, int images) {
  std::uniform_real_distribution<double> pos(0, 100), score(0, 1), jitter(-2, 2);
  std::uniform_int_distribution<int> count(0, 6);
  RandomCase rc;
  for (int i = 0; i < images; ++i) {
    std::vector<RoiBox> g;
    std::vector<Detection> d;
    const int ng = count(rng);
    for (int k = 0; k < ng; ++k) {
      g.push_back({pos(rng), pos(rng), 8, 8});
      // some hits, some duplicates
      if (score(rng) < 0.7) d.push_back(det(g.back().r + jitter(rng), g.back().c + jitter(rng), score(rng)));
      if (score(rng) < 0.2) d.push_back(det(g.back().r + jitter(rng), g.back().c + jitter(rng), score(rng)));
    }
    const int nf = count(rng);
    for (int k = 0; k < nf; ++k) d.push_back(det(pos(rng), pos(rng), std::round(score(rng) * 10) / 10));
    rc.gt.push_back(std::move(g));
    rc.dets.push_back(std::move(d));
  }
  if (rc.gt[0].empty()) rc.gt[0].push_back({50, 50, 8, 8});
  return rc;
}

}  // namespace

TEST(Match, ExactDetectionsAllHit) {
  const std::vector<RoiBox> gt{{10, 10, 6, 6}, {40, 40, 8, 8}, {70, 20, 4, 4}};
  std::vector<Detection> d;
  for (const auto& g : gt) d.push_back({g, 0.5, LesionClass::HM});
  for (MatchMode m : {MatchMode::CenterInRegion, MatchMode::Iou}) {
    const MatchCounts c = match_detections(d, gt, {m, 0.2});
    EXPECT_EQ(c.tp, 3);
    EXPECT_EQ(c.fp, 0);
    EXPECT_EQ(c.fn, 0);
  }
}

TEST(Match, NoDetectionsAllMissed) {
  const MatchCounts c = match_detections({}, {{10, 10, 6, 6}, {40, 40, 8, 8}});
  EXPECT_EQ(c.tp, 0);
  EXPECT_EQ(c.fn, 2);
}

TEST(Match, DuplicateOnOneLesionIsAFalsePositive) {
  const MatchCounts c = match_detections({det(10, 10, 0.9), det(10.5, 10, 0.8)}, {{10, 10, 6, 6}});
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.fp, 1);
  EXPECT_EQ(c.fn, 0);
}

TEST(Match, CentreRuleVersusIou) {
  // centre inside the lesion, but a huge box: IoU small
  const std::vector<RoiBox> gt{{20, 20, 4, 4}};
  const std::vector<Detection> d{det(20, 20, 0.9, 40)};
  EXPECT_EQ(match_detections(d, gt, {MatchMode::CenterInRegion, 0.2}).tp, 1);
  EXPECT_EQ(match_detections(d, gt, {MatchMode::Iou, 0.2}).tp, 0);
  EXPECT_THROW(match_detections(d, gt, {MatchMode::Iou, 0.0}), ParameterError);
  EXPECT_EQ(match_mode_from_string("iou"), MatchMode::Iou);
  EXPECT_THROW(match_mode_from_string("nearest"), ParameterError);
}

TEST(Froc, ThresholdExtremes) {
  const std::vector<std::vector<RoiBox>> gt{{{10, 10, 6, 6}}, {{30, 30, 6, 6}}};
  const std::vector<std::vector<Detection>> d{{det(10, 10, 0.4), det(80, 80, 0.3)}, {det(30, 30, 0.6)}};
  const FrocCurve c = froc_curve(d, gt, {}, {0.9, 0.1});
  EXPECT_EQ(c.points[0].sensitivity, 0.0);
  EXPECT_EQ(c.points[0].fpi, 0.0);
  EXPECT_EQ(c.points[1].sensitivity, 1.0);
  EXPECT_EQ(c.points[1].fpi, 0.5);
}

TEST(Froc, HandComputedTwoImageCurve) {
  const std::vector<std::vector<RoiBox>> gt{{{10, 10, 6, 6}, {50, 50, 6, 6}}, {{20, 20, 6, 6}}};
  const std::vector<std::vector<Detection>> d{
      {det(10, 10, 0.9), det(30, 30, 0.8), det(50.5, 50, 0.7), det(10.5, 10, 0.6)},
      {det(80, 80, 0.85), det(20, 20, 0.65)}};
  const FrocCurve c = froc_curve(d, gt, {}, {0.5, 0.95, 0.9, 0.85, 0.8, 0.7, 0.65, 0.6});
  const std::vector<double> thr{0.95, 0.9, 0.85, 0.8, 0.7, 0.65, 0.6, 0.5};
  const std::vector<long long> tp{0, 1, 1, 1, 2, 3, 3, 3}, fp{0, 0, 1, 2, 2, 2, 3, 3};
  ASSERT_EQ(c.points.size(), thr.size());
  for (std::size_t i = 0; i < thr.size(); ++i) {
    EXPECT_EQ(c.points[i].threshold, thr[i]);
    EXPECT_EQ(c.points[i].tp, tp[i]) << i;
    EXPECT_EQ(c.points[i].fp, fp[i]) << i;
    EXPECT_EQ(c.points[i].fn, 3 - tp[i]);
    EXPECT_DOUBLE_EQ(c.points[i].sensitivity, tp[i] / 3.0);
    EXPECT_DOUBLE_EQ(c.points[i].fpi, fp[i] / 2.0);
  }
  // 1/8 .. 1/4 see only fpi 0 (best 1/3); 1/2 sees 1/3; 1 sees the best of fpi 1
  const auto ref = reference_sensitivities(c);
  EXPECT_DOUBLE_EQ(ref[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ref[2], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ref[3], 1.0);
  EXPECT_DOUBLE_EQ(ref[6], 1.0);
  EXPECT_DOUBLE_EQ(sensitivity_at_fpi(c, 0.75), 1.0 / 3.0);
}

TEST(Froc, NoGroundTruthIsAnError) {
  EXPECT_THROW(froc_curve({{det(1, 1, 0.5)}}, {{}}), DegenerateInputError);
  EXPECT_THROW(froc_curve({}, {}), DegenerateInputError);
}

TEST(Froc, DefaultThresholdsCoverScoresAndGrid) {
  const auto t = froc_thresholds({{det(0, 0, 0.333)}, {det(0, 0, 0.5)}});
  EXPECT_GE(t.size(), 101u);
  EXPECT_TRUE(std::is_sorted(t.rbegin(), t.rend()));
  EXPECT_NE(std::find(t.begin(), t.end(), 0.333), t.end());
}

TEST(Froc, MonotoneAndConsistentWithPerImageMatching) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const RandomCase rc = random_case(rng, 1 + trial % 5);
    const FrocCurve c = froc_curve(rc.dets, rc.gt);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      EXPECT_GE(c.points[i].sensitivity, c.points[i - 1].sensitivity);
      EXPECT_GE(c.points[i].fpi, c.points[i - 1].fpi);
      EXPECT_LT(c.points[i].threshold, c.points[i - 1].threshold);
    }
    // recount a few thresholds from scratch, image by image
    for (std::size_t i = 0; i < c.points.size(); i += 17) {
      long long tp = 0, fp = 0;
      for (std::size_t img = 0; img < rc.dets.size(); ++img) {
        std::vector<Detection> kept;
        for (const auto& d : rc.dets[img])
          if (d.score >= c.points[i].threshold) kept.push_back(d);
        const MatchCounts m = match_detections(kept, rc.gt[img]);
        EXPECT_EQ(m.tp + m.fn, static_cast<int>(rc.gt[img].size()));
        tp += m.tp;
        fp += m.fp;
      }
      EXPECT_EQ(c.points[i].tp, tp);
      EXPECT_EQ(c.points[i].fp, fp);
    }
  }
}

TEST(Cpm, PublishedRows) {
  EXPECT_NEAR(cpm_score(curve_at_references({0.6460, 0.6506, 0.6537, 0.6579, 0.6766, 0.7064, 0.7278})), 0.6742, 5e-4);
  EXPECT_NEAR(cpm_score(curve_at_references({0.1470, 0.2030, 0.2683, 0.3680, 0.4478, 0.5187, 0.6252})), 0.3683, 5e-4);
  EXPECT_NEAR(cpm_score(curve_at_references({0.4210, 0.4238, 0.4467, 0.46116, 0.5072, 0.5447, 0.5850})), 0.4842, 5e-4);
  EXPECT_EQ(cpm_score(curve_at_references({0, 0, 0, 0, 0, 0, 0})), 0.0);
}

TEST(Cpm, StepLookupUsesLargestFpiNotAbove) {
  FrocCurve c;
  c.points = {{0.9, 0.0, 0.1}, {0.8, 0.2, 0.3}, {0.7, 0.6, 0.5}, {0.6, 3.0, 0.8}, {0.5, 9.0, 0.9}};
  const auto s = reference_sensitivities(c);
  const std::array<double, 7> want{0.1, 0.3, 0.3, 0.5, 0.5, 0.8, 0.8};
  for (std::size_t k = 0; k < 7; ++k) EXPECT_DOUBLE_EQ(s[k], want[k]) << k;
  FrocCurve late;
  late.points = {{0.9, 0.3, 0.4}};
  EXPECT_EQ(reference_sensitivities(late)[0], 0.0);
}

TEST(Cpm, InvariantUnderMonotoneRescaling) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    RandomCase rc = random_case(rng, 4);
    const double base = cpm_score(froc_curve(rc.dets, rc.gt));
    for (auto& img : rc.dets)
      for (auto& d : img) d.score = 0.05 + 0.9 * std::pow(d.score, 3.0);
    EXPECT_NEAR(cpm_score(froc_curve(rc.dets, rc.gt)), base, 1e-12);
  }
}

TEST(PerImage, MaxRule) {
  EXPECT_EQ(per_image_probability({det(0, 0, 0.2), det(5, 5, 0.7)}), 0.7);
  EXPECT_EQ(per_image_probability({}), 0.0);
  std::vector<Detection> merged{det(0, 0, 0.5)};
  Detection hm = det(9, 9, 0.9);
  hm.stream = LesionClass::HM;
  merged.push_back(hm);
  EXPECT_EQ(per_image_probability(merged), 0.9);
}

TEST(Auc, Examples) {
  EXPECT_EQ(roc_auc({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}), 1.0);
  EXPECT_EQ(roc_auc({0.4, 0.4, 0.4, 0.4}, {false, true, true, false}), 0.5);
  const std::vector<double> s{0.3, 0.7, 0.5, 0.5, 0.9, 0.1};
  const std::vector<bool> p{true, false, true, false, true, false};
  EXPECT_DOUBLE_EQ(roc_auc(s, p), brute_auc(s, p));
  EXPECT_THROW(roc_auc({0.1, 0.2}, {true, true}), DegenerateInputError);
}

TEST(Auc, MatchesPairCountOnSmallSets) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> n(2, 20), level(0, 5);
  for (int t = 0; t < 500; ++t) {
    const int k = n(rng);
    std::vector<double> s(static_cast<std::size_t>(k));
    std::vector<bool> p(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      s[static_cast<std::size_t>(i)] = level(rng) / 5.0;
      p[static_cast<std::size_t>(i)] = (i % 2) == 0 ? true : level(rng) > 2;
    }
    p[1] = false;
    EXPECT_DOUBLE_EQ(roc_auc(s, p), brute_auc(s, p));
  }
}

TEST(Roc, CurveEndpointsAndCsv) {
  const auto roc = roc_curve({0.1, 0.4, 0.35, 0.8}, {false, false, true, true});
  EXPECT_EQ(roc.front().fpr, 0.0);
  EXPECT_EQ(roc.front().tpr, 0.0);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
    EXPECT_GE(roc[i].tpr, roc[i - 1].tpr);
  }
  std::ostringstream csv;
  write_roc_csv(csv, roc);
  EXPECT_NE(csv.str().find("fpr"), std::string::npos);
  EXPECT_NE(roc_svg(roc, "t").find("<svg"), std::string::npos);
}

TEST(Froc, CsvAndSvgOutput) {
  const FrocCurve c = froc_curve({{det(10, 10, 0.9)}}, {{{10, 10, 6, 6}}});
  std::ostringstream csv;
  write_froc_csv(csv, c);
  const std::string text = csv.str();
  EXPECT_NE(text.find("threshold"), std::string::npos);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), c.points.size() + 1);
  EXPECT_NE(froc_svg(c, "MA").find("</svg>"), std::string::npos);
}
