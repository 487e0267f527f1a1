#pragma once

#include <cstddef>
#include <vector>

#include "redlesion/image.hpp"

namespace redlesion {

struct Pixel {
  int y = 0;
  int x = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Inclusive pixel extent of a region.
struct PixelExtent {
  int row0 = 0;
  int col0 = 0;
  int row1 = -1;
  int col1 = -1;
  int height() const { return row1 - row0 + 1; }
  int width() const { return col1 - col0 + 1; }
};

struct Component {
  std::vector<Pixel> pixels;  // raster order
  PixelExtent extent;
  std::size_t size() const { return pixels.size(); }
};

/// 8-connected components in raster-scan discovery order.
std::vector<Component> connected_components(const BinaryMask& mask);

std::size_t count_components(const BinaryMask& mask);

BinaryMask largest_component(const BinaryMask& mask);

/// Sets background regions not connected (4-neighbourhood) to the raster border.
BinaryMask fill_holes(const BinaryMask& mask);

/// Keeps components whose pixel count satisfies `min_pixels <= size`.
BinaryMask filter_components(const BinaryMask& mask, std::size_t min_pixels);

}  // namespace redlesion
