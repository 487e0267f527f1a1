#pragma once

#include "redlesion/candidates.hpp"
#include "redlesion/image.hpp"

namespace redlesion {

namespace nnet {
class SegmentationNet;
}

using VesselMask = BinaryMask;
using DarkRegionMask = BinaryMask;

/// Pixels of `green` (scaled to [0, 1]) with value <= threshold, inside the FOV.
DarkRegionMask dark_region_mask(const PlanarImage& green, const FovMask& fov, double threshold = 0.45);

/// Components of dark AND NOT vessels with more than `min_exclusive` pixels.
CandidateMap generate_large_candidates(const DarkRegionMask& dark, const VesselMask& vessels,
                                       std::size_t min_exclusive = 30);

struct HessianVesselParams {
  double sigmas[3] = {1.0, 2.0, 4.0};
  double beta = 0.5;       // blob suppression
  double c_fraction = 0.5; // structure scale as a fraction of the peak Hessian norm
  double threshold = 0.15; // on the maximum vesselness over scales
  std::size_t min_pixels = 20;
};

/// Model-free segmenter: Frangi-style eigenvalue test for dark ridges on the
/// Gaussian-smoothed green channel (values in [0, 255]).
VesselMask hessian_vessel_mask(const PlanarImage& green, const FovMask& fov, const HessianVesselParams& params = {});

/// Vessel probability from the trained segmentation net, thresholded.
VesselMask segment_vessels(const PlanarImage& patch, const nnet::SegmentationNet& model, double threshold = 0.5);

}  // namespace redlesion
