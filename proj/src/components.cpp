#include "redlesion/components.hpp"

#include <algorithm>
#include <deque>

namespace redlesion {

std::vector<Component> connected_components(const BinaryMask& mask) {
  std::vector<Component> out;
  const int h = mask.height;
  const int w = mask.width;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<Pixel> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.bits[idx] || seen[idx]) continue;
      Component comp;
      comp.extent = {y, x, y, x};
      seen[idx] = 1;
      stack.assign(1, Pixel{y, x});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        comp.pixels.push_back(p);
        comp.extent.row0 = std::min(comp.extent.row0, p.y);
        comp.extent.row1 = std::max(comp.extent.row1, p.y);
        comp.extent.col0 = std::min(comp.extent.col0, p.x);
        comp.extent.col1 = std::max(comp.extent.col1, p.x);
        for (int dy = -1; dy <= 1; ++dy) {
          const int ny = p.y + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx;
            if ((dy == 0 && dx == 0) || nx < 0 || nx >= w) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (mask.bits[nidx] && !seen[nidx]) {
              seen[nidx] = 1;
              stack.push_back({ny, nx});
            }
          }
        }
      }
      std::sort(comp.pixels.begin(), comp.pixels.end(),
                [](const Pixel& a, const Pixel& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
      out.push_back(std::move(comp));
    }
  }
  return out;
}

std::size_t count_components(const BinaryMask& mask) { return connected_components(mask).size(); }

BinaryMask largest_component(const BinaryMask& mask) {
  BinaryMask out(mask.height, mask.width);
  const auto comps = connected_components(mask);
  if (comps.empty()) return out;
  // Ties resolve to the first component in raster order.
  const auto best = std::max_element(comps.begin(), comps.end(),
                                     [](const Component& a, const Component& b) { return a.size() < b.size(); });
  for (const Pixel& p : best->pixels) out.set(p.y, p.x, true);
  return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const int h = mask.height;
  const int w = mask.width;
  std::vector<std::uint8_t> outside(mask.bits.size(), 0);
  std::deque<Pixel> queue;
  auto seed = [&](int y, int x) {
    const std::size_t idx = static_cast<std::size_t>(y) * w + x;
    if (!mask.bits[idx] && !outside[idx]) {
      outside[idx] = 1;
      queue.push_back({y, x});
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(0, x);
    seed(h - 1, x);
  }
  for (int y = 0; y < h; ++y) {
    seed(y, 0);
    seed(y, w - 1);
  }
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    for (int k = 0; k < 4; ++k) {
      const int ny = p.y + kDy[k];
      const int nx = p.x + kDx[k];
      if (ny >= 0 && ny < h && nx >= 0 && nx < w) seed(ny, nx);
    }
  }
  BinaryMask out(h, w);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = outside[i] ? 0 : 1;
  return out;
}

BinaryMask filter_components(const BinaryMask& mask, std::size_t min_pixels) {
  BinaryMask out(mask.height, mask.width);
  for (const Component& c : connected_components(mask)) {
    if (c.size() < min_pixels) continue;
    for (const Pixel& p : c.pixels) out.set(p.y, p.x, true);
  }
  return out;
}

}  // namespace redlesion
