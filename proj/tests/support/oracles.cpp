#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace redlesion::oracle {

PlanarImage brute_closing(const PlanarImage& f, const std::vector<kernels::Offset>& se) {
  const int h = f.height, w = f.width;
  auto inside = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w; };
  PlanarImage dil(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float m = -std::numeric_limits<float>::infinity();
      for (const auto& b : se)
        if (inside(y - b.dy, x - b.dx)) m = std::max(m, f.at(0, y - b.dy, x - b.dx));
      dil.at(0, y, x) = m;
    }
  PlanarImage out(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float m = std::numeric_limits<float>::infinity();
      for (const auto& b : se)
        if (inside(y + b.dy, x + b.dx)) m = std::min(m, dil.at(0, y + b.dy, x + b.dx));
      out.at(0, y, x) = m;
    }
  return out;
}

std::vector<PlanarImage> brute_closing_bank(const PlanarImage& f, const std::vector<int>& lengths,
                                            const std::vector<double>& angles) {
  std::vector<PlanarImage> out;
  for (int l : lengths) {
    PlanarImage best(f.height, f.width, 1, std::numeric_limits<float>::infinity());
    for (double a : angles) {
      std::vector<kernels::Offset> se;
      // digital line along the dominant axis, t centred on the origin
      const double rad = a * 3.14159265358979323846 / 180.0;
      const int lo = -((l - 1) / 2);
      const int hi = l - 1 - (l - 1) / 2;
      const bool x_major = std::abs(std::cos(rad)) >= std::abs(std::sin(rad));
      for (int t = lo; t <= hi; ++t) {
        if (x_major)
          se.push_back({static_cast<int>(std::lround(-t * std::tan(rad))), t});
        else
          se.push_back({t, static_cast<int>(std::lround(-t / std::tan(rad)))});
      }
      const PlanarImage c = brute_closing(f, se);
      for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) best.at(0, y, x) = std::min(best.at(0, y, x), c.at(0, y, x));
    }
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) best.at(0, y, x) -= f.at(0, y, x);
    out.push_back(std::move(best));
  }
  return out;
}

int brute_count_components(const BinaryMask& mask) {
  const int h = mask.height, w = mask.width;
  std::vector<int> seen(static_cast<std::size_t>(h) * w, 0);
  int count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x) || seen[static_cast<std::size_t>(y) * w + x]) continue;
      ++count;
      stack.assign(1, {y, x});
      seen[static_cast<std::size_t>(y) * w + x] = 1;
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            if (!mask(ny, nx) || seen[static_cast<std::size_t>(ny) * w + nx]) continue;
            seen[static_cast<std::size_t>(ny) * w + nx] = 1;
            stack.push_back({ny, nx});
          }
      }
    }
  return count;
}

BinaryMask brute_cap(const PlanarImage& diff, int k_max) {
  std::set<float, std::greater<>> levels;
  for (float v : diff.data)
    if (v > 0.0f) levels.insert(v);
  BinaryMask kept(diff.height, diff.width);
  for (float t : levels) {
    BinaryMask m(diff.height, diff.width);
    for (int y = 0; y < diff.height; ++y)
      for (int x = 0; x < diff.width; ++x) m.set(y, x, diff.at(0, y, x) >= t);
    if (brute_count_components(m) > k_max) break;
    kept = m;
  }
  return kept;
}

nnet::Tensor4 brute_roi_pool(const nnet::Tensor4& f, const std::vector<nnet::PooledRoi>& rois, int out_h, int out_w,
                             double scale) {
  nnet::Tensor4 out(static_cast<int>(rois.size()), f.c, out_h, out_w);
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const RoiBox& b = rois[r].box;
    auto axis = [](double lo, double hi, int n, int& a, int& e) {
      a = std::clamp(static_cast<int>(std::floor(lo)), 0, n);
      e = std::clamp(static_cast<int>(std::ceil(hi)), 0, n);
      if (e <= a) {
        a = std::clamp(static_cast<int>(std::floor(lo)), 0, n - 1);
        e = a + 1;
      }
    };
    int r0, r1, c0, c1;
    axis(b.top() * scale, b.bottom() * scale, f.h, r0, r1);
    axis(b.left() * scale, b.right() * scale, f.w, c0, c1);
    const double bh = static_cast<double>(r1 - r0) / out_h;
    const double bw = static_cast<double>(c1 - c0) / out_w;
    for (int ch = 0; ch < f.c; ++ch)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const int y0 = r0 + static_cast<int>(std::floor(i * bh + 1e-9));
          const int y1 = r0 + static_cast<int>(std::ceil((i + 1) * bh - 1e-9));
          const int x0 = c0 + static_cast<int>(std::floor(j * bw + 1e-9));
          const int x1 = c0 + static_cast<int>(std::ceil((j + 1) * bw - 1e-9));
          double m = -std::numeric_limits<double>::infinity();
          for (int y = y0; y < std::max(y1, y0 + 1); ++y)
            for (int x = x0; x < std::max(x1, x0 + 1); ++x) m = std::max(m, f.at(rois[r].batch, ch, y, x));
          out.at(static_cast<int>(r), ch, i, j) = m;
        }
  }
  return out;
}

PlanarImage random_image(std::mt19937_64& rng, int h, int w, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  PlanarImage img(h, w, 1);
  for (float& v : img.data) v = u(rng);
  return img;
}

PlanarImage random_structured(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  PlanarImage img(h, w, 1, 0.6f);
  const int bumps = 2 + static_cast<int>(u(rng) * 4);
  for (int k = 0; k < bumps; ++k) {
    const float cy = u(rng) * h, cx = u(rng) * w, s = 1.0f + u(rng) * 4.0f, a = (u(rng) - 0.6f) * 0.6f;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(0, y, x) += a * std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2 * s * s));
  }
  for (float& v : img.data) v += (u(rng) - 0.5f) * 0.05f;
  // quantise so ties and plateaus occur
  for (float& v : img.data) v = std::round(v * 64.0f) / 64.0f;
  return img;
}

BinaryMask random_blobs(std::mt19937_64& rng, int h, int w, int blobs, int max_radius) {
  std::uniform_int_distribution<int> ry(0, h - 1), rx(0, w - 1), rr(0, max_radius);
  BinaryMask m(h, w);
  for (int k = 0; k < blobs; ++k) {
    const int cy = ry(rng), cx = rx(rng), r = rr(rng);
    const int ay = std::uniform_int_distribution<int>(0, r)(rng);
    for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y)
      for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x)
        if ((y - cy) * (y - cy) * (ay + 1) + (x - cx) * (x - cx) <= r * r + r) m.set(y, x, true);
  }
  return m;
}

}  // namespace redlesion::oracle
