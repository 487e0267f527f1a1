#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace redlesion {

/// Channel-planar float raster. Raw inputs hold values in [0, 255];
/// intermediate transforms may leave that range.
struct PlanarImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  PlanarImage() = default;
  PlanarImage(int h, int w, int c, float fill = 0.0f);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  bool empty() const { return data.empty(); }

  float& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * height + y) * width + x]; }
  float at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * height + y) * width + x]; }

  std::span<float> plane(int ch) { return {data.data() + ch * plane_size(), plane_size()}; }
  std::span<const float> plane(int ch) const { return {data.data() + ch * plane_size(), plane_size()}; }

  bool same_geometry(const PlanarImage& other) const {
    return height == other.height && width == other.width;
  }
};

/// Boolean raster; used for the FOV, vessel, dark-region and candidate maps.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w, bool fill = false);

  bool operator()(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

  std::size_t count() const;
  bool none() const { return count() == 0; }
  bool same_geometry(const BinaryMask& other) const {
    return height == other.height && width == other.width;
  }
  template <class Img>
  bool matches(const Img& img) const {
    return height == img.height && width == img.width;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

using FovMask = BinaryMask;

PlanarImage extract_channel(const PlanarImage& image, int channel);
PlanarImage scaled(const PlanarImage& image, float factor);
PlanarImage apply_mask(const PlanarImage& image, const BinaryMask& mask, float outside = 0.0f);

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_not(const BinaryMask& a);

// File I/O. PNG, PPM and PGM are supported for reading; writes are PNG.
PlanarImage read_image(const std::string& path);
void write_image(const std::string& path, const PlanarImage& image);
BinaryMask read_mask(const std::string& path);
void write_mask(const std::string& path, const BinaryMask& mask);

}  // namespace redlesion
