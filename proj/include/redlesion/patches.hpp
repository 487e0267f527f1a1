#pragma once

#include <array>

#include "redlesion/box.hpp"
#include "redlesion/image.hpp"

namespace redlesion {

inline constexpr int kFrameSize = 700;
inline constexpr int kPatchSize = 500;
inline constexpr int kPatchCount = 4;

struct PatchOrigin {
  int row = 0;
  int col = 0;
  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

inline constexpr std::array<PatchOrigin, kPatchCount> kPatchOrigins{{{0, 0}, {0, 200}, {200, 0}, {200, 200}}};

enum class StreamTag { None, MA, HM };

/// Maps continuous coordinates between the original image and the working frame.
struct FrameTransform {
  int crop_row = 0;
  int crop_col = 0;
  int crop_height = 0;
  int crop_width = 0;
  int frame_size = kFrameSize;

  double row_scale() const { return static_cast<double>(frame_size) / crop_height; }
  double col_scale() const { return static_cast<double>(frame_size) / crop_width; }
  RoiBox to_frame(const RoiBox& original) const;
  RoiBox to_original(const RoiBox& framed) const;
};

struct FramedImage {
  PlanarImage image;
  FovMask mask;
  FrameTransform transform;
};

/// Crops to the mask's bounding box and resizes image and mask to
/// frame_size x frame_size (bilinear; the mask is resampled and thresholded at 0.5).
FramedImage crop_and_resize(const PlanarImage& image, const FovMask& mask, int frame_size = kFrameSize);

/// Bilinear resampling, pixel-centre aligned, edge-clamped.
PlanarImage resize_bilinear(const PlanarImage& image, int out_height, int out_width);

struct PatchSet {
  std::array<PlanarImage, kPatchCount> patches;
  std::array<PatchOrigin, kPatchCount> origins = kPatchOrigins;
  StreamTag stream = StreamTag::None;
};

PatchSet split_patches(const PlanarImage& frame, StreamTag stream = StreamTag::None);
std::array<BinaryMask, kPatchCount> split_mask(const BinaryMask& frame);

/// Per-patch max across streams, then pixelwise max across overlapping patches.
PlanarImage merge_patches(const PatchSet& ma, const PatchSet& hm);

RoiBox patch_to_frame(const RoiBox& box, int patch_index);

}  // namespace redlesion
