#include "redlesion/box.hpp"

#include <algorithm>
#include <string>

#include "redlesion/error.hpp"

namespace redlesion {

std::string_view to_string(LesionClass c) { return c == LesionClass::MA ? "MA" : "HM"; }

LesionClass lesion_class_from_string(std::string_view s) {
  if (s == "MA" || s == "ma") return LesionClass::MA;
  if (s == "HM" || s == "hm") return LesionClass::HM;
  throw ParameterError("unknown lesion class '" + std::string(s) + "'");
}

double iou(const RoiBox& a, const RoiBox& b) {
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  if (ih <= 0.0 || iw <= 0.0) return 0.0;
  const double inter = ih * iw;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

RoiBox extended(const RoiBox& b, double pixels) { return {b.r, b.c, b.h + 2.0 * pixels, b.w + 2.0 * pixels}; }

RoiBox shrunk(const RoiBox& b, double pixels) {
  return {b.r, b.c, std::max(1.0, b.h - 2.0 * pixels), std::max(1.0, b.w - 2.0 * pixels)};
}

RoiBox clamped(const RoiBox& b, int height, int width) {
  double top = std::clamp(b.top(), 0.0, static_cast<double>(height));
  double bottom = std::clamp(b.bottom(), 0.0, static_cast<double>(height));
  double left = std::clamp(b.left(), 0.0, static_cast<double>(width));
  double right = std::clamp(b.right(), 0.0, static_cast<double>(width));
  if (bottom - top < 1.0) {
    top = std::min(top, height - 1.0);
    bottom = top + 1.0;
  }
  if (right - left < 1.0) {
    left = std::min(left, width - 1.0);
    right = left + 1.0;
  }
  return RoiBox::from_edges(top, left, bottom, right);
}

bool contains_point(const RoiBox& b, double r, double c) {
  return r >= b.top() && r < b.bottom() && c >= b.left() && c < b.right();
}

}  // namespace redlesion
