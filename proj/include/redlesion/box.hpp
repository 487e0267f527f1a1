#pragma once

#include <string_view>

#include "redlesion/components.hpp"

namespace redlesion {

/// Axis-aligned rectangle given by its centre (r, c) and size (h, w), in
/// continuous pixel coordinates: pixel (i, j) covers [i, i+1) x [j, j+1).
struct RoiBox {
  double r = 0.0;
  double c = 0.0;
  double h = 0.0;
  double w = 0.0;

  double top() const { return r - 0.5 * h; }
  double bottom() const { return r + 0.5 * h; }
  double left() const { return c - 0.5 * w; }
  double right() const { return c + 0.5 * w; }
  double area() const { return h * w; }
  bool valid() const { return h > 0.0 && w > 0.0; }

  static RoiBox from_edges(double top, double left, double bottom, double right) {
    return {0.5 * (top + bottom), 0.5 * (left + right), bottom - top, right - left};
  }
  static RoiBox from_extent(const PixelExtent& e) {
    return from_edges(e.row0, e.col0, e.row1 + 1.0, e.col1 + 1.0);
  }

  friend bool operator==(const RoiBox&, const RoiBox&) = default;
};

enum class LesionClass { MA, HM };

std::string_view to_string(LesionClass c);

struct GroundTruthLesion {
  RoiBox box;
  LesionClass cls = LesionClass::MA;
};
LesionClass lesion_class_from_string(std::string_view s);

double iou(const RoiBox& a, const RoiBox& b);

/// Grows the box by `pixels` on every side.
RoiBox extended(const RoiBox& b, double pixels);

/// Shrinks by `pixels` per side, never below 1 px along either axis.
RoiBox shrunk(const RoiBox& b, double pixels);

/// Intersects the box with [0, height) x [0, width); degenerate results keep a 1 px size.
RoiBox clamped(const RoiBox& b, int height, int width);

bool contains_point(const RoiBox& b, double r, double c);

}  // namespace redlesion
