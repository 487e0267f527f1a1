#include "redlesion/cand_large.hpp"

#include <algorithm>
#include <cmath>

#include "redlesion/error.hpp"
#include "redlesion/imgproc.hpp"
#include "redlesion/nnet/segnet.hpp"

namespace redlesion {

DarkRegionMask dark_region_mask(const PlanarImage& green, const FovMask& fov, double threshold) {
  if (green.channels != 1) throw ShapeError("dark_region_mask: expected a single-channel image");
  if (!fov.matches(green)) throw ShapeError("dark_region_mask: mask does not match image");
  DarkRegionMask out(green.height, green.width);
  for (std::size_t i = 0; i < out.bits.size(); ++i)
    out.bits[i] = fov.bits[i] && green.data[i] <= threshold ? 1 : 0;
  return out;
}

CandidateMap generate_large_candidates(const DarkRegionMask& dark, const VesselMask& vessels,
                                       std::size_t min_exclusive) {
  if (!dark.same_geometry(vessels)) throw ShapeError("generate_large_candidates: masks are not aligned");
  return candidate_map_from_mask(mask_and(dark, mask_not(vessels)), min_exclusive + 1);
}

VesselMask hessian_vessel_mask(const PlanarImage& green, const FovMask& fov, const HessianVesselParams& params) {
  if (green.channels != 1) throw ShapeError("hessian_vessel_mask: expected a single-channel image");
  if (!fov.matches(green)) throw ShapeError("hessian_vessel_mask: mask does not match image");
  const int h = green.height;
  const int w = green.width;
  std::vector<double> best(green.plane_size(), 0.0);
  std::vector<double> l1(best.size()), l2(best.size());
  for (double sigma : params.sigmas) {
    const PlanarImage s = gaussian_blur(green, sigma);
    auto v = [&](int y, int x) {
      return static_cast<double>(s.at(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)));
    };
    const double norm = sigma * sigma;
    double peak = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dxx = norm * (v(y, x + 1) - 2.0 * v(y, x) + v(y, x - 1));
        const double dyy = norm * (v(y + 1, x) - 2.0 * v(y, x) + v(y - 1, x));
        const double dxy = norm * 0.25 * (v(y + 1, x + 1) - v(y + 1, x - 1) - v(y - 1, x + 1) + v(y - 1, x - 1));
        const double mean = 0.5 * (dxx + dyy);
        const double disc = std::sqrt(0.25 * (dxx - dyy) * (dxx - dyy) + dxy * dxy);
        double a = mean - disc, b = mean + disc;
        if (std::abs(a) > std::abs(b)) std::swap(a, b);  // |a| <= |b|
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        l1[i] = a;
        l2[i] = b;
        if (fov.bits[i]) peak = std::max(peak, std::hypot(a, b));
      }
    if (peak <= 0.0) continue;
    const double c = params.c_fraction * peak;
    for (std::size_t i = 0; i < best.size(); ++i) {
      // A dark ridge has strong positive curvature across it and little along it.
      if (l2[i] <= 0.0) continue;
      const double rb = l1[i] / l2[i];
      const double s2 = l1[i] * l1[i] + l2[i] * l2[i];
      const double vesselness = std::exp(-rb * rb / (2.0 * params.beta * params.beta)) * (1.0 - std::exp(-s2 / (2.0 * c * c)));
      best[i] = std::max(best[i], vesselness);
    }
  }
  VesselMask out(h, w);
  for (std::size_t i = 0; i < best.size(); ++i) out.bits[i] = fov.bits[i] && best[i] >= params.threshold ? 1 : 0;
  return filter_components(out, params.min_pixels);
}

VesselMask segment_vessels(const PlanarImage& patch, const nnet::SegmentationNet& model, double threshold) {
  if (!model.trained()) throw ModelError("segment_vessels: segmentation model has not been trained");
  const nnet::Tensor4 prob = model.predict(patch);
  VesselMask out(patch.height, patch.width);
  const std::size_t hw = prob.plane_size();
  for (std::size_t p = 0; p < hw; ++p) out.bits[p] = prob.data[hw + p] >= threshold ? 1 : 0;
  return out;
}

}  // namespace redlesion
