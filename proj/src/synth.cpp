#include "redlesion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "redlesion/components.hpp"
#include "redlesion/error.hpp"
#include "redlesion/imgproc.hpp"

namespace redlesion {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Scene {
  int h = 0;
  int w = 0;
  FovMask fov;
  std::vector<float> vessel_depth;
  std::vector<float> lesion_depth;
  BinaryMask vessels, ma, hm;
  std::vector<GroundTruthLesion> lesions;

  Scene(int h_, int w_) : h(h_), w(w_), fov(h_, w_), vessel_depth(static_cast<std::size_t>(h_) * w_, 0.0f),
                          lesion_depth(vessel_depth.size(), 0.0f), vessels(h_, w_), ma(h_, w_), hm(h_, w_) {}
  bool inside(double y, double x) const {
    const int iy = static_cast<int>(std::floor(y)), ix = static_cast<int>(std::floor(x));
    return iy >= 0 && iy < h && ix >= 0 && ix < w && fov(iy, ix);
  }
};

double uniform(std::mt19937_64& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

void stamp_vessel(Scene& s, double py, double px, double radius, double depth) {
  const int y0 = std::max(0, static_cast<int>(std::floor(py - radius - 1)));
  const int y1 = std::min(s.h - 1, static_cast<int>(std::ceil(py + radius + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(px - radius - 1)));
  const int x1 = std::min(s.w - 1, static_cast<int>(std::ceil(px + radius + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      if (!s.fov(y, x)) continue;
      const double d = std::hypot(y + 0.5 - py, x + 0.5 - px);
      if (d > radius) continue;
      const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
      const double v = depth * (1.0 - 0.4 * (d / radius) * (d / radius));
      s.vessel_depth[i] = std::max(s.vessel_depth[i], static_cast<float>(v));
      s.vessels.bits[i] = 1;
    }
}

void grow_vessel(Scene& s, std::mt19937_64& rng, double y, double x, double dir, double width, double length, int depth_level) {
  std::normal_distribution<double> turn(0.0, 0.035);
  double curvature = 0.0;
  const double w_end = std::max(2.0, width * 0.45);
  for (double t = 0.0; t < length; t += 0.5) {
    if (!s.inside(y, x)) break;
    const double wcur = width + (w_end - width) * (t / length);
    const double contrast = 15.0 + 15.0 * std::clamp((wcur - 2.0) / 5.0, 0.0, 1.0);
    stamp_vessel(s, y, x, 0.5 * wcur, contrast);
    curvature = std::clamp(curvature + turn(rng) * 0.5, -0.02, 0.02);
    dir += curvature;
    y += 0.5 * std::sin(dir);
    x += 0.5 * std::cos(dir);
    if (depth_level < 2 && wcur > 3.0 && uniform(rng, 0.0, 1.0) < 0.003) {
      const double side = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      grow_vessel(s, rng, y, x, dir + side * uniform(rng, 0.5, 0.9), std::max(2.0, wcur * 0.7), (length - t) * 0.7,
                  depth_level + 1);
    }
  }
}

// Clearance test: no vessel or lesion pixel within `radius` of (cy, cx).
bool clear_area(const Scene& s, double cy, double cx, double radius) {
  const int y0 = static_cast<int>(std::floor(cy - radius)), y1 = static_cast<int>(std::ceil(cy + radius));
  const int x0 = static_cast<int>(std::floor(cx - radius)), x1 = static_cast<int>(std::ceil(cx + radius));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      if (y < 0 || y >= s.h || x < 0 || x >= s.w) return false;
      if (!s.fov(y, x)) return false;
      if (std::hypot(y + 0.5 - cy, x + 0.5 - cx) > radius) continue;
      const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
      if (s.vessels.bits[i] || s.ma.bits[i] || s.hm.bits[i]) return false;
    }
  return true;
}

template <class Shape>
bool plant(Scene& s, std::mt19937_64& rng, double extent, double margin, LesionClass cls, double depth, Shape shape) {
  for (int attempt = 0; attempt < 400; ++attempt) {
    const double cy = uniform(rng, extent + 2, s.h - extent - 2);
    const double cx = uniform(rng, extent + 2, s.w - extent - 2);
    if (!clear_area(s, cy, cx, extent + margin)) continue;
    BinaryMask& target = cls == LesionClass::MA ? s.ma : s.hm;
    PixelExtent ext{s.h, s.w, -1, -1};
    const int y0 = static_cast<int>(std::floor(cy - extent)), y1 = static_cast<int>(std::ceil(cy + extent));
    const int x0 = static_cast<int>(std::floor(cx - extent)), x1 = static_cast<int>(std::ceil(cx + extent));
    std::size_t count = 0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double rho = shape(y + 0.5 - cy, x + 0.5 - cx);  // <= 1 inside
        if (rho > 1.0) continue;
        const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
        s.lesion_depth[i] = std::max(s.lesion_depth[i], static_cast<float>(depth * (1.0 - 0.35 * rho * rho)));
        target.bits[i] = 1;
        ++count;
        ext.row0 = std::min(ext.row0, y);
        ext.row1 = std::max(ext.row1, y);
        ext.col0 = std::min(ext.col0, x);
        ext.col1 = std::max(ext.col1, x);
      }
    if (count == 0) continue;
    s.lesions.push_back({RoiBox::from_extent(ext), cls});
    return true;
  }
  return false;
}

void plant_lesions(Scene& s, std::mt19937_64& rng, int n_ma, int n_hm) {
  // Large lesions first, they need the most room.
  for (int k = 0; k < n_hm; ++k) {
    const double area = uniform(rng, 40.0, 400.0);
    const bool flame = uniform(rng, 0.0, 1.0) < 0.5;
    const double aspect = flame ? uniform(rng, 2.0, 3.0) : uniform(rng, 1.0, 1.5);
    const double b = std::sqrt(area / (kPi * aspect));
    const double a = aspect * b;
    const double phi = uniform(rng, 0.0, kPi);
    const double psi = uniform(rng, 0.0, 2.0 * kPi);
    const double wobble = uniform(rng, 0.05, 0.15);
    const double depth = uniform(rng, 20.0, 40.0);
    plant(s, rng, a * (1.0 + wobble) + 1.0, 6.0, LesionClass::HM, depth, [=](double dy, double dx) {
      const double u = dx * std::cos(phi) + dy * std::sin(phi);
      const double v = -dx * std::sin(phi) + dy * std::cos(phi);
      const double theta = std::atan2(v, u);
      const double edge = 1.0 + wobble * std::sin(3.0 * theta + psi);
      return std::sqrt((u / a) * (u / a) + (v / b) * (v / b)) / edge;
    });
  }
  for (int k = 0; k < n_ma; ++k) {
    const double r = 0.5 * uniform(rng, 4.0, 7.0);
    const double depth = uniform(rng, 12.0, 25.0);
    plant(s, rng, r + 1.0, 6.0, LesionClass::MA, depth, [=](double dy, double dx) { return std::hypot(dy, dx) / r; });
  }
}

void render_vessels(Scene& s, std::mt19937_64& rng, int trees, bool aperture, double radius) {
  const double cy = 0.5 * s.h, cx = 0.5 * s.w;
  for (int t = 0; t < trees; ++t) {
    double y, x, dir, length;
    if (aperture) {
      // All trees leave a disc-like hub off centre, as in a fundus image.
      const double side = t % 2 == 0 ? 1.0 : -1.0;
      y = cy + uniform(rng, -0.08, 0.08) * radius;
      x = cx + side * 0.35 * radius;
      dir = uniform(rng, 0.0, 2.0 * kPi);
      length = uniform(rng, 0.6, 1.3) * radius;
    } else {
      const int edge = static_cast<int>(uniform(rng, 0.0, 4.0));
      const double u = uniform(rng, 0.1, 0.9);
      y = edge == 0 ? 0.5 : edge == 1 ? s.h - 0.5 : u * s.h;
      x = edge == 2 ? 0.5 : edge == 3 ? s.w - 0.5 : u * s.w;
      dir = std::atan2(cy - y, cx - x) + uniform(rng, -0.6, 0.6);
      length = 1.5 * std::max(s.h, s.w);
    }
    grow_vessel(s, rng, y, x, dir, uniform(rng, 5.0, 7.0), length, 0);
  }
}

PlanarImage compose(const Scene& s, std::mt19937_64& rng) {
  const std::array<double, 3> base{200.0, 110.0, 60.0};
  const std::array<double, 3> vessel_gain{0.35, 1.0, 0.3};
  const std::array<double, 3> lesion_gain{0.3, 1.0, 0.35};
  const double f1 = uniform(rng, 0.5, 1.2), f2 = uniform(rng, 0.5, 1.2);
  const double p1 = uniform(rng, 0.0, 2.0 * kPi), p2 = uniform(rng, 0.0, 2.0 * kPi);
  PlanarImage noise(s.h, s.w, 3);
  std::normal_distribution<double> gauss(0.0, 6.0);
  for (float& v : noise.data) v = static_cast<float>(gauss(rng));
  noise = gaussian_blur(noise, 1.2);
  PlanarImage img(s.h, s.w, 3, 0.0f);
  const double scale = std::max({s.h, s.w, 700});
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
      if (!s.fov.bits[i]) {
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = 4.0f;
        continue;
      }
      // Illumination varies on a fixed absolute scale, so small canvases see a gentle gradient.
      const double ny = static_cast<double>(y) / scale, nx = static_cast<double>(x) / scale;
      const double rr = std::hypot(ny - 0.5 * s.h / scale, nx - 0.5 * s.w / scale) * 2.0;
      const double illum = 1.0 + 0.1 * std::sin(2 * kPi * f1 * ny + p1) * std::cos(2 * kPi * f2 * nx + p2) - 0.12 * rr * rr;
      for (int c = 0; c < 3; ++c) {
        const double v = base[static_cast<std::size_t>(c)] * illum + noise.at(c, y, x) -
                         vessel_gain[static_cast<std::size_t>(c)] * s.vessel_depth[i] -
                         lesion_gain[static_cast<std::size_t>(c)] * s.lesion_depth[i];
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 255.0));
      }
    }
  return img;
}

}  // namespace

SynthFundus synthesize_fundus(const SynthConfig& config, std::uint64_t seed) {
  if (config.size < 64) throw ParameterError("synthesize_fundus: size must be >= 64");
  if (config.ma_min > config.ma_max || config.hm_min > config.hm_max || config.ma_min < 0 || config.hm_min < 0)
    throw ParameterError("synthesize_fundus: bad lesion count range");
  std::mt19937_64 rng(seed);
  Scene s(config.size, config.size);
  const double c = 0.5 * config.size;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      s.fov.set(y, x, config.full_fov || std::hypot(y + 0.5 - c, x + 0.5 - c) <= config.fov_radius);
  render_vessels(s, rng, config.vessel_trees, !config.full_fov, config.fov_radius);
  if (config.lesions) {
    const int n_ma = std::uniform_int_distribution<int>(config.ma_min, config.ma_max)(rng);
    const int n_hm = std::uniform_int_distribution<int>(config.hm_min, config.hm_max)(rng);
    plant_lesions(s, rng, n_ma, n_hm);
  }
  SynthFundus out;
  out.rgb = compose(s, rng);
  out.fov = s.fov;
  out.vessels = s.vessels;
  out.ma = s.ma;
  out.hm = s.hm;
  out.lesions = s.lesions;
  out.dr = !out.lesions.empty();
  return out;
}

SynthPatch synthesize_patch(int size, int n_ma, int n_hm, int vessel_trees, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.size = size;
  cfg.full_fov = true;
  cfg.vessel_trees = vessel_trees;
  cfg.ma_min = cfg.ma_max = n_ma;
  cfg.hm_min = cfg.hm_max = n_hm;
  const SynthFundus f = synthesize_fundus(cfg, seed);
  EqualizationParams eq;
  eq.sigma_divisor = size * 30.0 / 700.0;
  SynthPatch p;
  p.patch = contrast_equalize(f.rgb, f.fov, eq);
  p.fov = f.fov;
  p.vessels = f.vessels;
  p.lesions = f.lesions;
  return p;
}

}  // namespace redlesion

namespace redlesion {

DatasetManifest write_synthetic_dataset(const std::string& dir, int count, int clean, const SynthConfig& config,
                                        std::uint64_t seed) {
  if (count < 1 || clean < 0 || clean > count) throw ParameterError("write_synthetic_dataset: bad image counts");
  std::filesystem::create_directories(dir);
  DatasetManifest manifest;
  manifest.entries.resize(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < count; ++i) {
    SynthConfig c = config;
    c.lesions = i < count - clean;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%03d", i);
    const SynthFundus f = synthesize_fundus(c, seed * 1000003ULL + static_cast<std::uint64_t>(i));
    const std::filesystem::path base = std::filesystem::path(dir) / id;
    ManifestEntry& e = manifest.entries[static_cast<std::size_t>(i)];
    e.id = id;
    e.image = base.string() + ".png";
    e.ma_gt = base.string() + "_ma.png";
    e.hm_gt = base.string() + "_hm.png";
    e.vessel_gt = base.string() + "_vessels.png";
    e.gt_format = GtFormat::MaskPng;
    e.dr = f.dr;
    write_image(e.image, f.rgb);
    write_mask(*e.ma_gt, f.ma);
    write_mask(*e.hm_gt, f.hm);
    write_mask(*e.vessel_gt, f.vessels);
  }
  // Stored relative to the manifest so the directory can be moved.
  DatasetManifest stored = manifest;
  const auto rel = [](std::string& p) { p = std::filesystem::path(p).filename().string(); };
  for (ManifestEntry& e : stored.entries) {
    rel(e.image);
    rel(*e.ma_gt);
    rel(*e.hm_gt);
    rel(*e.vessel_gt);
  }
  save_manifest((std::filesystem::path(dir) / "manifest.json").string(), stored);
  return manifest;
}

}  // namespace redlesion
