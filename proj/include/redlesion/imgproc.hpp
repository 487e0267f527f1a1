#pragma once

#include <span>
#include <vector>

#include "redlesion/image.hpp"

namespace redlesion {

struct FcmOptions {
  double fuzzifier = 2.0;
  double tol = 1e-5;
  int max_iter = 300;
};

/// Fuzzy c-means on scalar samples.
struct FcmResult {
  std::vector<double> centers;
  std::vector<double> memberships;  // row-major, samples x k
  int iterations = 0;
  bool converged = false;

  int k() const { return static_cast<int>(centers.size()); }
  double membership(std::size_t sample, int cluster) const { return memberships[sample * centers.size() + cluster]; }
};

/// Throws DegenerateInputError on empty input or when k exceeds the number of
/// distinct sample values, ParameterError on k < 1 or fuzzifier <= 1.
FcmResult fcm_cluster(std::span<const double> samples, int k, const FcmOptions& opts = {});

/// Same iteration on (value, weight) pairs; memberships are per value.
FcmResult fcm_cluster_weighted(std::span<const double> values, std::span<const double> weights, int k,
                               const FcmOptions& opts = {});

/// Red channel -> power 0.25 -> 2-cluster FCM -> brighter cluster, largest
/// component, holes filled. Throws DegenerateInputError for single-level input.
FovMask extract_fov_mask(const PlanarImage& rgb);

/// Width of the foreground bounding box (the FOV diameter chi).
int fov_width(const FovMask& mask);

/// Number of fill rings used by pad_aperture: ceil(chi * 3 / 30).
int aperture_rings(const FovMask& mask);

/// Grows the image outside the FOV ring by ring; each new pixel takes the
/// mean of its already-valid 8-neighbours. In-FOV pixels are untouched.
PlanarImage pad_aperture(const PlanarImage& image, const FovMask& mask);
PlanarImage pad_aperture(const PlanarImage& image, const FovMask& mask, int rings);

/// Normalized taps exp(-x^2 / 2 sigma^2), radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable blur per channel, replicate border. Throws ParameterError for sigma <= 0.
PlanarImage gaussian_blur(const PlanarImage& image, double sigma);

struct EqualizationParams {
  double alpha = 4.0;
  double tau = -4.0;
  double gamma = 128.0;
  double sigma_divisor = 30.0;  // sigma = chi / sigma_divisor
};

/// I_c = clip(alpha I + tau (G_sigma * I) + gamma, 0, 255) inside the mask, 0 outside.
PlanarImage contrast_equalize(const PlanarImage& padded, const FovMask& mask, const EqualizationParams& params = {});

struct Preprocessed {
  PlanarImage equalized;
  FovMask mask;
};

/// extract_fov_mask -> pad_aperture -> contrast_equalize.
Preprocessed preprocess_fundus(const PlanarImage& rgb, const EqualizationParams& params = {});

}  // namespace redlesion
