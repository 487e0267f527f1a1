#pragma once

#include <span>
#include <vector>

#include "redlesion/candidates.hpp"
#include "redlesion/image.hpp"
#include "redlesion/kernels.hpp"

namespace redlesion {

/// Background-pinned polynomial gray-level remap. For each FOV pixel with
/// local (masked box-window) mean mu and FOV extremes t_min / t_max:
///   t <= mu : 0.5 * ((t - t_min) / (mu - t_min))^degree
///   t >  mu : 1 - 0.5 * ((t_max - t) / (t_max - mu))^degree
/// Pixels outside the FOV are set to 0.5.
struct RPolyParams {
  int degree = 2;
  int window = 41;  // odd side length of the background window
};

PlanarImage r_polynomial_transform(const PlanarImage& green, const FovMask& mask, const RPolyParams& params = {});

/// Digital line of `length` pixels through the origin, parameterised along its
/// dominant axis; angles are degrees counter-clockwise from the +x axis.
std::vector<kernels::Offset> line_structuring_element(int length, double angle_deg);

/// Closing with an arbitrary structuring element: min_B(max_{-B}(f)).
PlanarImage morphological_closing(const PlanarImage& image, std::span<const kernels::Offset> se);

/// For each length l (in input order): min over angles of the line closings,
/// minus the image. Every returned value is >= 0.
std::vector<PlanarImage> line_closing_bank(const PlanarImage& image, std::span<const int> lengths,
                                           std::span<const double> angles_deg);

/// Smallest threshold t over the positive values of `diff` such that
/// {diff >= t'} has at most k_max 8-connected components for every level
/// t' >= t (lowering t stops at the first level that breaks the cap).
/// Returns {diff >= t}; empty when already the top level has too many.
BinaryMask cap_candidates_topk(const PlanarImage& diff, int k_max);

struct SmallCandidateParams {
  RPolyParams rpoly;
  double denoise_sigma = 1.0;
  std::vector<int> lengths = default_lengths();
  std::vector<double> angles = default_angles();
  int k_max = 120;
  int min_pixels = 5;

  static std::vector<int> default_lengths();    // 3, 6, ..., 60
  static std::vector<double> default_angles();  // 0, 15, ..., 165
};

/// Green channel -> r-polynomial -> Gaussian -> closing bank -> per-length
/// cap -> union -> drop components under min_pixels.
CandidateMap generate_small_candidates(const PlanarImage& patch, const FovMask& mask,
                                       const SmallCandidateParams& params = {});

}  // namespace redlesion
