#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <iosfwd>
#include <string>
#include <vector>

#include "redlesion/detector.hpp"

namespace redlesion {

enum class MatchMode { CenterInRegion, Iou };

struct MatchPolicy {
  MatchMode mode = MatchMode::CenterInRegion;
  double iou_min = 0.2;
};

std::string_view to_string(MatchMode m);
MatchMode match_mode_from_string(std::string_view s);

struct MatchCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

/// Greedy one-to-one matching by descending score (ties: smaller r, then c).
/// A detection takes the unmatched ground truth it overlaps best.
MatchCounts match_detections(const std::vector<Detection>& detections, const std::vector<RoiBox>& gt,
                             const MatchPolicy& policy = {});

/// Per detection, in the matching order, whether it was a true positive.
struct MatchTrace {
  std::vector<double> scores;
  std::vector<std::uint8_t> hit;
};
MatchTrace match_trace(const std::vector<Detection>& detections, const std::vector<RoiBox>& gt, const MatchPolicy& policy);

struct FrocPoint {
  double threshold = 0.0;
  double fpi = 0.0;
  double sensitivity = 0.0;
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // descending threshold
};

/// Every distinct score plus 101 evenly spaced levels from 1 to 0, descending.
std::vector<double> froc_thresholds(const std::vector<std::vector<Detection>>& detections);

/// Thresholds are sorted descending; an empty list selects froc_thresholds().
/// Throws DegenerateInputError when there are no images or no gt lesions.
FrocCurve froc_curve(const std::vector<std::vector<Detection>>& detections, const std::vector<std::vector<RoiBox>>& gt,
                     const MatchPolicy& policy = {}, std::vector<double> thresholds = {});

inline constexpr std::array<double, 7> kCpmReferenceFpi{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

/// Sensitivity at each reference FPI: the best point among those with the
/// largest fpi not above the reference, 0 when no point qualifies.
std::array<double, 7> reference_sensitivities(const FrocCurve& curve);
double cpm_score(const FrocCurve& curve);

/// Highest sensitivity over points with fpi <= limit.
double sensitivity_at_fpi(const FrocCurve& curve, double limit);

/// Max detection score, 0 without detections.
double per_image_probability(const std::vector<Detection>& detections);

/// Probability that a random positive outranks a random negative, ties count
/// one half. Throws DegenerateInputError unless both classes are present.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive);

void write_froc_csv(std::ostream& out, const FrocCurve& curve);
void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& roc);
std::string froc_svg(const FrocCurve& curve, const std::string& title);
std::string roc_svg(const std::vector<RocPoint>& roc, const std::string& title);

}  // namespace redlesion
