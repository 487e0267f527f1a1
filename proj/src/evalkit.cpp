#include "redlesion/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "redlesion/error.hpp"

namespace redlesion {

std::string_view to_string(MatchMode m) { return m == MatchMode::Iou ? "iou" : "center"; }

MatchMode match_mode_from_string(std::string_view s) {
  if (s == "center" || s == "center-in-region") return MatchMode::CenterInRegion;
  if (s == "iou") return MatchMode::Iou;
  throw ParameterError("unknown match mode '" + std::string(s) + "' (expected center or iou)");
}

namespace {

std::vector<std::size_t> score_order(const std::vector<Detection>& d) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (d[a].score != d[b].score) return d[a].score > d[b].score;
    if (d[a].box.r != d[b].box.r) return d[a].box.r < d[b].box.r;
    return d[a].box.c < d[b].box.c;
  });
  return order;
}

}  // namespace

MatchTrace match_trace(const std::vector<Detection>& detections, const std::vector<RoiBox>& gt, const MatchPolicy& policy) {
  if (policy.mode == MatchMode::Iou && !(policy.iou_min > 0.0 && policy.iou_min <= 1.0))
    throw ParameterError("match policy: iou_min must be in (0, 1]");
  MatchTrace trace;
  std::vector<std::uint8_t> taken(gt.size(), 0);
  for (std::size_t idx : score_order(detections)) {
    const Detection& d = detections[idx];
    int best = -1;
    double best_overlap = -1.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double overlap = iou(d.box, gt[g]);
      const bool ok = policy.mode == MatchMode::Iou ? overlap >= policy.iou_min : contains_point(gt[g], d.box.r, d.box.c);
      if (ok && overlap > best_overlap) {
        best_overlap = overlap;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) taken[static_cast<std::size_t>(best)] = 1;
    trace.scores.push_back(d.score);
    trace.hit.push_back(best >= 0 ? 1 : 0);
  }
  return trace;
}

MatchCounts match_detections(const std::vector<Detection>& detections, const std::vector<RoiBox>& gt,
                             const MatchPolicy& policy) {
  const MatchTrace t = match_trace(detections, gt, policy);
  MatchCounts c;
  for (std::uint8_t h : t.hit) (h ? c.tp : c.fp) += 1;
  c.fn = static_cast<int>(gt.size()) - c.tp;
  return c;
}

std::vector<double> froc_thresholds(const std::vector<std::vector<Detection>>& detections) {
  std::vector<double> t;
  for (const auto& img : detections)
    for (const Detection& d : img) t.push_back(d.score);
  for (int i = 0; i <= 100; ++i) t.push_back(1.0 - i / 100.0);
  std::sort(t.begin(), t.end(), std::greater<>());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

FrocCurve froc_curve(const std::vector<std::vector<Detection>>& detections, const std::vector<std::vector<RoiBox>>& gt,
                     const MatchPolicy& policy, std::vector<double> thresholds) {
  if (detections.empty()) throw DegenerateInputError("froc_curve: no images");
  if (detections.size() != gt.size()) throw ShapeError("froc_curve: detection and ground-truth image counts differ");
  long long total_gt = 0;
  for (const auto& g : gt) total_gt += static_cast<long long>(g.size());
  if (total_gt == 0) throw DegenerateInputError("froc_curve: no ground-truth lesions, sensitivity undefined");
  if (thresholds.empty()) thresholds = froc_thresholds(detections);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());

  // Greedy matching in score order is prefix-stable: thresholding keeps a
  // prefix of the order, and each kept detection is matched as before.
  std::vector<std::pair<double, std::uint8_t>> all;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const MatchTrace t = match_trace(detections[i], gt[i], policy);
    for (std::size_t k = 0; k < t.scores.size(); ++k) all.emplace_back(t.scores[k], t.hit[k]);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  FrocCurve curve;
  const double images = static_cast<double>(detections.size());
  std::size_t pos = 0;
  long long tp = 0, fp = 0;
  for (double thr : thresholds) {
    while (pos < all.size() && all[pos].first >= thr) {
      (all[pos].second ? tp : fp) += 1;
      ++pos;
    }
    FrocPoint p;
    p.threshold = thr;
    p.tp = tp;
    p.fp = fp;
    p.fn = total_gt - tp;
    p.sensitivity = static_cast<double>(tp) / static_cast<double>(total_gt);
    p.fpi = static_cast<double>(fp) / images;
    curve.points.push_back(p);
  }
  return curve;
}

std::array<double, 7> reference_sensitivities(const FrocCurve& curve) {
  std::array<double, 7> out{};
  for (std::size_t k = 0; k < kCpmReferenceFpi.size(); ++k) {
    const double ref = kCpmReferenceFpi[k];
    double best_fpi = -1.0;
    double sens = 0.0;
    for (const FrocPoint& p : curve.points) {
      if (p.fpi > ref) continue;
      if (p.fpi > best_fpi) {
        best_fpi = p.fpi;
        sens = p.sensitivity;
      } else if (p.fpi == best_fpi) {
        sens = std::max(sens, p.sensitivity);
      }
    }
    out[k] = sens;
  }
  return out;
}

double cpm_score(const FrocCurve& curve) {
  const auto s = reference_sensitivities(curve);
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

double sensitivity_at_fpi(const FrocCurve& curve, double limit) {
  double best = 0.0;
  for (const FrocPoint& p : curve.points)
    if (p.fpi <= limit) best = std::max(best, p.sensitivity);
  return best;
}

double per_image_probability(const std::vector<Detection>& detections) {
  double p = 0.0;
  for (const Detection& d : detections) p = std::max(p, d.score);
  return p;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("roc_auc: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks, doubled so ties stay integral: rank2 = 2 * (average 1-based rank).
  long long pos_rank2 = 0;
  long long n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const long long rank2 = static_cast<long long>(i + 1 + j);  // (i+1) + j = 2 * mean rank
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        pos_rank2 += rank2;
        ++n_pos;
      }
    i = j;
  }
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateInputError("roc_auc: both classes must be present");
  // Twice the Mann-Whitney count: wins count 2, ties 1.
  const long long u2 = pos_rank2 - n_pos * (n_pos + 1);
  return 0.5 * static_cast<double>(u2) / static_cast<double>(n_pos * n_neg);
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("roc_curve: score and label counts differ");
  long long n_pos = std::count(positive.begin(), positive.end(), true);
  long long n_neg = static_cast<long long>(positive.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateInputError("roc_curve: both classes must be present");
  std::vector<double> thr(scores);
  std::sort(thr.begin(), thr.end(), std::greater<>());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  std::vector<RocPoint> out;
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (double t : thr) {
    long long tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= t) (positive[i] ? tp : fp) += 1;
    out.push_back({t, static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
  }
  return out;
}

void write_froc_csv(std::ostream& out, const FrocCurve& curve) {
  out << "threshold,fpi,sensitivity,tp,fp,fn\n";
  char buf[160];
  for (const FrocPoint& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%lld,%lld,%lld\n", p.threshold, p.fpi, p.sensitivity, p.tp, p.fp, p.fn);
    out << buf;
  }
}

void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& roc) {
  out << "threshold,fpr,tpr\n";
  char buf[128];
  for (const RocPoint& p : roc) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", std::isfinite(p.threshold) ? p.threshold : 1.0, p.fpr, p.tpr);
    out << buf;
  }
}

namespace {

constexpr int kW = 480, kH = 360, kMargin = 50;

std::string svg_frame(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<std::pair<double, std::string>>& xticks, const std::string& body) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << title
    << "</text>\n"
    << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kW - 2 * kMargin << "\" height=\""
    << kH - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const auto& [x, label] : xticks)
    s << "<text x=\"" << x << "\" y=\"" << kH - kMargin + 15 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"10\">" << label << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = kH - kMargin - k * (kH - 2 * kMargin) / 4.0;
    s << "<text x=\"" << kMargin - 5 << "\" y=\"" << y + 3 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
      << "font-size=\"10\">" << k * 0.25 << "</text>\n";
  }
  s << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
    << "font-size=\"12\">" << xlabel << "</text>\n"
    << "<text x=\"14\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
    << "transform=\"rotate(-90 14 " << kH / 2 << ")\">" << ylabel << "</text>\n"
    << body << "</svg>\n";
  return s.str();
}

}  // namespace

std::string froc_svg(const FrocCurve& curve, const std::string& title) {
  // log2 FPI axis over [1/8, 8]
  auto px = [](double fpi) {
    const double l = std::clamp(std::log2(std::max(fpi, 0.125)), -3.0, 3.0);
    return kMargin + (l + 3.0) / 6.0 * (kW - 2 * kMargin);
  };
  auto py = [](double s) { return kH - kMargin - s * (kH - 2 * kMargin); };
  std::ostringstream body;
  body << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
  for (auto it = curve.points.begin(); it != curve.points.end(); ++it)
    if (it->fpi <= 8.0) body << px(it->fpi) << ',' << py(it->sensitivity) << ' ';
  body << "\"/>\n";
  std::vector<std::pair<double, std::string>> ticks;
  for (double f : kCpmReferenceFpi) {
    std::ostringstream l;
    l << f;
    ticks.emplace_back(px(f), l.str());
  }
  return svg_frame(title, "false positives per image", "sensitivity", ticks, body.str());
}

std::string roc_svg(const std::vector<RocPoint>& roc, const std::string& title) {
  auto px = [](double f) { return kMargin + f * (kW - 2 * kMargin); };
  auto py = [](double t) { return kH - kMargin - t * (kH - 2 * kMargin); };
  std::ostringstream body;
  body << "<polyline fill=\"none\" stroke=\"#2c3e50\" stroke-width=\"2\" points=\"";
  for (const RocPoint& p : roc) body << px(p.fpr) << ',' << py(p.tpr) << ' ';
  body << px(1.0) << ',' << py(1.0) << "\"/>\n";
  std::vector<std::pair<double, std::string>> ticks;
  for (int k = 0; k <= 4; ++k) {
    std::ostringstream l;
    l << k * 0.25;
    ticks.emplace_back(px(k * 0.25), l.str());
  }
  return svg_frame(title, "false positive rate", "true positive rate", ticks, body.str());
}

}  // namespace redlesion
