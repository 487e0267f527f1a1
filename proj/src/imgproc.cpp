#include "redlesion/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "redlesion/components.hpp"
#include "redlesion/error.hpp"
#include "redlesion/kernels.hpp"

namespace redlesion {

namespace {

void fcm_memberships(double x, std::span<const double> centers, double exponent, double* out) {
  const int k = static_cast<int>(centers.size());
  int zeros = 0;
  for (int j = 0; j < k; ++j)
    if (x == centers[j]) ++zeros;
  if (zeros > 0) {
    for (int j = 0; j < k; ++j) out[j] = (x == centers[j]) ? 1.0 / zeros : 0.0;
    return;
  }
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const double d2 = (x - centers[j]) * (x - centers[j]);
    out[j] = std::pow(1.0 / d2, exponent);
    total += out[j];
  }
  for (int j = 0; j < k; ++j) out[j] /= total;
}

}  // namespace

FcmResult fcm_cluster_weighted(std::span<const double> values, std::span<const double> weights, int k,
                               const FcmOptions& opts) {
  if (values.empty()) throw DegenerateInputError("fcm_cluster: empty sample set");
  if (weights.size() != values.size()) throw ShapeError("fcm_cluster: weights/values size mismatch");
  if (k < 1) throw ParameterError("fcm_cluster: k must be >= 1");
  if (!(opts.fuzzifier > 1.0)) throw ParameterError("fcm_cluster: fuzzifier must be > 1");
  if (opts.max_iter < 1) throw ParameterError("fcm_cluster: max_iter must be >= 1");

  std::vector<double> distinct(values.begin(), values.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < k)
    throw DegenerateInputError("fcm_cluster: k exceeds the number of distinct samples");

  FcmResult res;
  res.centers.resize(k);
  if (k == 1) {
    res.centers[0] = distinct.front();
  } else {
    const double last = static_cast<double>(distinct.size() - 1);
    for (int j = 0; j < k; ++j)
      res.centers[j] = distinct[static_cast<std::size_t>(std::lround(j * last / (k - 1)))];
  }

  const double m = opts.fuzzifier;
  const double exponent = 1.0 / (m - 1.0);
  const std::size_t n = values.size();
  std::vector<double> u(static_cast<std::size_t>(k));
  std::vector<double> num(k), den(k);
  for (int it = 0; it < opts.max_iter; ++it) {
    std::fill(num.begin(), num.end(), 0.0);
    std::fill(den.begin(), den.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      fcm_memberships(values[i], res.centers, exponent, u.data());
      for (int j = 0; j < k; ++j) {
        const double um = std::pow(u[j], m) * weights[i];
        num[j] += um * values[i];
        den[j] += um;
      }
    }
    double moved = 0.0;
    for (int j = 0; j < k; ++j) {
      const double c = den[j] > 0.0 ? num[j] / den[j] : res.centers[j];
      moved = std::max(moved, std::abs(c - res.centers[j]));
      res.centers[j] = c;
    }
    res.iterations = it + 1;
    if (moved < opts.tol) {
      res.converged = true;
      break;
    }
  }

  res.memberships.resize(n * k);
  for (std::size_t i = 0; i < n; ++i) fcm_memberships(values[i], res.centers, exponent, res.memberships.data() + i * k);
  return res;
}

FcmResult fcm_cluster(std::span<const double> samples, int k, const FcmOptions& opts) {
  const std::vector<double> ones(samples.size(), 1.0);
  return fcm_cluster_weighted(samples, ones, k, opts);
}

FovMask extract_fov_mask(const PlanarImage& rgb) {
  if (rgb.channels != 3) throw ShapeError("extract_fov_mask: expected a 3-channel image");
  const auto red = rgb.plane(0);
  std::vector<double> enhanced(red.size());
  for (std::size_t i = 0; i < red.size(); ++i)
    enhanced[i] = std::pow(std::clamp(static_cast<double>(red[i]) / 255.0, 0.0, 1.0), 0.25);

  std::vector<double> levels = enhanced;
  std::sort(levels.begin(), levels.end());
  std::vector<double> weights;
  std::vector<double> distinct;
  for (std::size_t i = 0; i < levels.size();) {
    std::size_t j = i;
    while (j < levels.size() && levels[j] == levels[i]) ++j;
    distinct.push_back(levels[i]);
    weights.push_back(static_cast<double>(j - i));
    i = j;
  }
  if (distinct.size() < 2)
    throw DegenerateInputError("extract_fov_mask: image has a single intensity level, no separable clusters");

  const FcmResult fcm = fcm_cluster_weighted(distinct, weights, 2);
  const int bright = fcm.centers[1] > fcm.centers[0] ? 1 : 0;

  BinaryMask raw(rgb.height, rgb.width);
  for (std::size_t i = 0; i < enhanced.size(); ++i) {
    const auto pos = std::lower_bound(distinct.begin(), distinct.end(), enhanced[i]) - distinct.begin();
    raw.bits[i] = fcm.membership(static_cast<std::size_t>(pos), bright) > 0.5 ? 1 : 0;
  }
  FovMask mask = fill_holes(largest_component(raw));
  if (mask.none()) throw DegenerateInputError("extract_fov_mask: empty foreground");
  return mask;
}

int fov_width(const FovMask& mask) {
  int lo = mask.width;
  int hi = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask(y, x)) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
  return hi < lo ? 0 : hi - lo + 1;
}

int aperture_rings(const FovMask& mask) {
  return static_cast<int>(std::ceil(3.0 * fov_width(mask) / 30.0));
}

PlanarImage pad_aperture(const PlanarImage& image, const FovMask& mask) {
  return pad_aperture(image, mask, aperture_rings(mask));
}

PlanarImage pad_aperture(const PlanarImage& image, const FovMask& mask, int rings) {
  if (!mask.matches(image)) throw ShapeError("pad_aperture: mask does not match image");
  if (rings < 0) throw ParameterError("pad_aperture: negative ring count");
  PlanarImage out = image;
  const int h = image.height;
  const int w = image.width;
  std::vector<std::uint8_t> valid = mask.bits;
  std::vector<std::uint8_t> queued(valid.size(), 0);
  std::vector<Pixel> frontier;

  auto enqueue_neighbours = [&](int y, int x) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy;
        const int nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const std::size_t idx = static_cast<std::size_t>(ny) * w + nx;
        if (!valid[idx] && !queued[idx]) {
          queued[idx] = 1;
          frontier.push_back({ny, nx});
        }
      }
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (valid[static_cast<std::size_t>(y) * w + x]) enqueue_neighbours(y, x);
  // Keep the frontier in raster order so the output does not depend on discovery order.
  auto raster = [](const Pixel& a, const Pixel& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; };
  std::sort(frontier.begin(), frontier.end(), raster);

  std::vector<double> ring_values;
  for (int ring = 0; ring < rings && !frontier.empty(); ++ring) {
    ring_values.assign(frontier.size() * image.channels, 0.0);
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      const Pixel p = frontier[f];
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = p.y + dy;
          const int nx = p.x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (!valid[static_cast<std::size_t>(ny) * w + nx]) continue;
          ++count;
          for (int c = 0; c < image.channels; ++c) ring_values[f * image.channels + c] += out.at(c, ny, nx);
        }
      for (int c = 0; c < image.channels; ++c) ring_values[f * image.channels + c] /= count;
    }
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      const Pixel p = frontier[f];
      valid[static_cast<std::size_t>(p.y) * w + p.x] = 1;
      for (int c = 0; c < image.channels; ++c)
        out.at(c, p.y, p.x) = static_cast<float>(ring_values[f * image.channels + c]);
    }
    std::vector<Pixel> done = std::move(frontier);
    frontier.clear();
    for (const Pixel& p : done) enqueue_neighbours(p.y, p.x);
    std::sort(frontier.begin(), frontier.end(), raster);
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_kernel: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    total += taps[i + radius];
  }
  for (double& t : taps) t /= total;
  return taps;
}

PlanarImage gaussian_blur(const PlanarImage& image, double sigma) {
  const std::vector<double> taps = gaussian_kernel(sigma);
  PlanarImage tmp(image.height, image.width, image.channels);
  PlanarImage out(image.height, image.width, image.channels);
  for (int c = 0; c < image.channels; ++c) {
    kernels::omp::gaussian_rows(image.plane(c), tmp.plane(c), image.height, image.width, taps);
    kernels::omp::gaussian_cols(tmp.plane(c), out.plane(c), image.height, image.width, taps);
  }
  return out;
}

PlanarImage contrast_equalize(const PlanarImage& padded, const FovMask& mask, const EqualizationParams& params) {
  if (!mask.matches(padded)) throw ShapeError("contrast_equalize: mask does not match image");
  const int chi = fov_width(mask);
  if (chi == 0) throw DegenerateInputError("contrast_equalize: empty FOV mask");
  const PlanarImage blurred = gaussian_blur(padded, chi / params.sigma_divisor);
  PlanarImage out(padded.height, padded.width, padded.channels);
  const std::size_t n = padded.plane_size();
  for (int c = 0; c < padded.channels; ++c) {
    auto src = padded.plane(c);
    auto blur = blurred.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.bits[i]) continue;
      const double v = params.alpha * src[i] + params.tau * blur[i] + params.gamma;
      dst[i] = static_cast<float>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

Preprocessed preprocess_fundus(const PlanarImage& rgb, const EqualizationParams& params) {
  Preprocessed out;
  out.mask = extract_fov_mask(rgb);
  out.equalized = contrast_equalize(pad_aperture(rgb, out.mask), out.mask, params);
  return out;
}

}  // namespace redlesion
