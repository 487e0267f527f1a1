#include "redlesion/cand_small.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "redlesion/error.hpp"
#include "redlesion/imgproc.hpp"

namespace redlesion {

using kernels::Offset;

PlanarImage r_polynomial_transform(const PlanarImage& green, const FovMask& mask, const RPolyParams& params) {
  if (green.channels != 1) throw ShapeError("r_polynomial_transform: expected a single-channel image");
  if (!mask.matches(green)) throw ShapeError("r_polynomial_transform: mask does not match image");
  if (params.degree < 1) throw ParameterError("r_polynomial_transform: degree must be >= 1");
  if (params.window < 1 || params.window % 2 == 0) throw ParameterError("r_polynomial_transform: window must be odd");

  const int h = green.height;
  const int w = green.width;
  // Integral images of masked values and mask counts, (h+1) x (w+1).
  std::vector<double> sum(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  std::vector<double> cnt(sum.size(), 0.0);
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < h; ++y) {
    double row_sum = 0.0, row_cnt = 0.0;
    for (int x = 0; x < w; ++x) {
      if (mask(y, x)) {
        const double v = green.at(0, y, x);
        row_sum += v;
        row_cnt += 1.0;
        t_min = std::min(t_min, v);
        t_max = std::max(t_max, v);
      }
      const std::size_t i = static_cast<std::size_t>(y + 1) * (w + 1) + x + 1;
      sum[i] = sum[i - (w + 1)] + row_sum;
      cnt[i] = cnt[i - (w + 1)] + row_cnt;
    }
  }

  PlanarImage out(h, w, 1, 0.5f);
  if (!(t_max > t_min)) return out;
  const int rad = params.window / 2;
  const double r = params.degree;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - rad), y1 = std::min(h, y + rad + 1);
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const int x0 = std::max(0, x - rad), x1 = std::min(w, x + rad + 1);
      auto box = [&](const std::vector<double>& s) {
        return s[static_cast<std::size_t>(y1) * (w + 1) + x1] - s[static_cast<std::size_t>(y0) * (w + 1) + x1] -
               s[static_cast<std::size_t>(y1) * (w + 1) + x0] + s[static_cast<std::size_t>(y0) * (w + 1) + x0];
      };
      const double n = box(cnt);
      const double t = green.at(0, y, x);
      const double mu = n > 0.0 ? box(sum) / n : t;
      double f;
      if (t <= mu)
        f = mu > t_min ? 0.5 * std::pow((t - t_min) / (mu - t_min), r) : 0.5;
      else
        f = t_max > mu ? 1.0 - 0.5 * std::pow((t_max - t) / (t_max - mu), r) : 0.5;
      out.at(0, y, x) = static_cast<float>(std::clamp(f, 0.0, 1.0));
    }
  }
  return out;
}

namespace {

struct TRange {
  int lo;
  int hi;
};

TRange line_t_range(int length) {
  const int lo = -((length - 1) / 2);
  return {lo, lo + length - 1};
}

Offset line_point(int t, double angle_deg) {
  const double a = angle_deg * std::acos(-1.0) / 180.0;
  const double cs = std::cos(a);
  const double sn = std::sin(a);
  // Image rows grow downwards, so the direction vector is (dy, dx) = (-sin, cos).
  if (std::abs(cs) >= std::abs(sn)) {
    const double slope = -sn / cs;
    return {static_cast<int>(std::lround(t * slope)), t};
  }
  const double slope = -cs / sn;
  return {t, static_cast<int>(std::lround(t * slope))};
}

std::vector<Offset> reflected(std::span<const Offset> se) {
  std::vector<Offset> out(se.begin(), se.end());
  for (Offset& o : out) o = {-o.dy, -o.dx};
  return out;
}

}  // namespace

std::vector<Offset> line_structuring_element(int length, double angle_deg) {
  if (length < 1) throw ParameterError("line_structuring_element: length must be >= 1");
  const TRange tr = line_t_range(length);
  std::vector<Offset> se;
  se.reserve(length);
  for (int t = tr.lo; t <= tr.hi; ++t) se.push_back(line_point(t, angle_deg));
  return se;
}

PlanarImage morphological_closing(const PlanarImage& image, std::span<const Offset> se) {
  if (image.channels != 1) throw ShapeError("morphological_closing: expected a single-channel image");
  const auto neg = reflected(se);
  PlanarImage dil(image.height, image.width, 1);
  PlanarImage out(image.height, image.width, 1);
  kernels::omp::max_filter(image.data, dil.data, image.height, image.width, neg);
  kernels::omp::min_filter(dil.data, out.data, image.height, image.width, se);
  return out;
}

std::vector<PlanarImage> line_closing_bank(const PlanarImage& image, std::span<const int> lengths,
                                           std::span<const double> angles_deg) {
  if (lengths.empty()) throw ParameterError("line_closing_bank: empty length set");
  if (angles_deg.empty()) throw ParameterError("line_closing_bank: empty angle set");
  if (image.channels != 1) throw ShapeError("line_closing_bank: expected a single-channel image");
  for (int l : lengths)
    if (l < 1) throw ParameterError("line_closing_bank: lengths must be >= 1");

  const int h = image.height;
  const int w = image.width;
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });

  std::vector<PlanarImage> closed(lengths.size(), PlanarImage(h, w, 1, std::numeric_limits<float>::infinity()));
  PlanarImage dil(h, w, 1);
  PlanarImage ero(h, w, 1);
  for (double angle : angles_deg) {
    // Line SEs of increasing length share their points, so the dilation of
    // each length extends the previous one by the newly added offsets.
    std::fill(dil.data.begin(), dil.data.end(), -std::numeric_limits<float>::infinity());
    TRange have{1, 0};
    for (std::size_t idx : order) {
      const TRange want = line_t_range(lengths[idx]);
      std::vector<Offset> added;
      for (int t = want.lo; t <= want.hi; ++t)
        if (t < have.lo || t > have.hi) {
          const Offset p = line_point(t, angle);
          added.push_back({-p.dy, -p.dx});
        }
      kernels::omp::max_accumulate(image.data, dil.data, h, w, added);
      have = {std::min(have.lo, want.lo), std::max(have.hi, want.hi)};
      if (have.lo > have.hi) have = want;
      const auto se = line_structuring_element(lengths[idx], angle);
      kernels::omp::min_filter(dil.data, ero.data, h, w, se);
      auto& acc = closed[idx].data;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = std::min(acc[i], ero.data[i]);
    }
  }
  for (auto& c : closed)
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= image.data[i];
  return closed;
}

namespace {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    parent[b] = a;
    return true;
  }
};

}  // namespace

BinaryMask cap_candidates_topk(const PlanarImage& diff, int k_max) {
  if (diff.channels != 1) throw ShapeError("cap_candidates_topk: expected a single-channel image");
  const int h = diff.height;
  const int w = diff.width;
  std::vector<int> order;
  for (int i = 0; i < h * w; ++i)
    if (diff.data[i] > 0.0f) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return diff.data[a] > diff.data[b]; });

  // Sweep thresholds from high to low, tracking the component count of
  // {diff >= t} with union-find, and stop at the first level that exceeds
  // the cap. The count is not monotone in t: far below that point components
  // merge again, and continuing would admit one region spanning the patch.
  DisjointSets sets(static_cast<std::size_t>(h) * w);
  std::vector<std::uint8_t> on(static_cast<std::size_t>(h) * w, 0);
  long long components = 0;
  float best = std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < order.size();) {
    const float level = diff.data[order[i]];
    std::size_t j = i;
    for (; j < order.size() && diff.data[order[j]] == level; ++j) {
      const int p = order[j];
      on[p] = 1;
      ++components;
      const int y = p / w;
      const int x = p % w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if ((dy == 0 && dx == 0) || ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int q = ny * w + nx;
          if (on[q] && sets.unite(p, q)) --components;
        }
    }
    if (components > k_max) break;
    best = level;
    i = j;
  }
  BinaryMask out(h, w);
  if (!std::isfinite(best)) return out;
  for (int i = 0; i < h * w; ++i) out.bits[i] = diff.data[i] >= best && diff.data[i] > 0.0f ? 1 : 0;
  return out;
}

std::vector<int> SmallCandidateParams::default_lengths() {
  std::vector<int> l;
  for (int v = 3; v <= 60; v += 3) l.push_back(v);
  return l;
}

std::vector<double> SmallCandidateParams::default_angles() {
  std::vector<double> a;
  for (int v = 0; v < 180; v += 15) a.push_back(v);
  return a;
}

CandidateMap generate_small_candidates(const PlanarImage& patch, const FovMask& mask,
                                       const SmallCandidateParams& params) {
  if (!mask.matches(patch)) throw ShapeError("generate_small_candidates: mask does not match patch");
  if (params.min_pixels < 1) throw ParameterError("generate_small_candidates: min_pixels must be >= 1");
  const PlanarImage green = extract_channel(patch, patch.channels >= 3 ? 1 : 0);
  const PlanarImage normalized = r_polynomial_transform(green, mask, params.rpoly);
  const PlanarImage smooth = gaussian_blur(normalized, params.denoise_sigma);
  std::vector<PlanarImage> bank = line_closing_bank(smooth, params.lengths, params.angles);

  BinaryMask united(patch.height, patch.width);
  for (PlanarImage& diff : bank) {
    for (std::size_t i = 0; i < diff.data.size(); ++i)
      if (!mask.bits[i]) diff.data[i] = 0.0f;
    const BinaryMask capped = cap_candidates_topk(diff, params.k_max);
    for (std::size_t i = 0; i < united.bits.size(); ++i) united.bits[i] |= capped.bits[i];
  }
  return candidate_map_from_mask(united, static_cast<std::size_t>(params.min_pixels));
}

}  // namespace redlesion
