#include "redlesion/patches.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "redlesion/error.hpp"

namespace redlesion {

RoiBox FrameTransform::to_frame(const RoiBox& b) const {
  return {(b.r - crop_row) * row_scale(), (b.c - crop_col) * col_scale(), b.h * row_scale(), b.w * col_scale()};
}

RoiBox FrameTransform::to_original(const RoiBox& b) const {
  return {b.r / row_scale() + crop_row, b.c / col_scale() + crop_col, b.h / row_scale(), b.w / col_scale()};
}

PlanarImage resize_bilinear(const PlanarImage& image, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw ParameterError("resize_bilinear: non-positive output size");
  if (image.height == 0 || image.width == 0) throw ShapeError("resize_bilinear: empty input");
  PlanarImage out(out_height, out_width, image.channels);
  const double sy = static_cast<double>(image.height) / out_height;
  const double sx = static_cast<double>(image.width) / out_width;
  struct Tap {
    int i0, i1;
    double t;
  };
  auto taps = [](int n_out, int n_in, double s) {
    std::vector<Tap> t(n_out);
    for (int o = 0; o < n_out; ++o) {
      const double src = std::clamp((o + 0.5) * s - 0.5, 0.0, static_cast<double>(n_in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, n_in - 1);
      t[o] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto ty = taps(out_height, image.height, sy);
  const auto tx = taps(out_width, image.width, sx);
  for (int c = 0; c < image.channels; ++c) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_height; ++y) {
      const Tap a = ty[y];
      for (int x = 0; x < out_width; ++x) {
        const Tap b = tx[x];
        const double top = (1.0 - b.t) * image.at(c, a.i0, b.i0) + b.t * image.at(c, a.i0, b.i1);
        const double bot = (1.0 - b.t) * image.at(c, a.i1, b.i0) + b.t * image.at(c, a.i1, b.i1);
        out.at(c, y, x) = static_cast<float>((1.0 - a.t) * top + a.t * bot);
      }
    }
  }
  return out;
}

FramedImage crop_and_resize(const PlanarImage& image, const FovMask& mask, int frame_size) {
  if (!mask.matches(image)) throw ShapeError("crop_and_resize: mask does not match image");
  int r0 = mask.height, r1 = -1, c0 = mask.width, c1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask(y, x)) {
        r0 = std::min(r0, y);
        r1 = std::max(r1, y);
        c0 = std::min(c0, x);
        c1 = std::max(c1, x);
      }
  if (r1 < 0) throw DegenerateInputError("crop_and_resize: empty mask");

  FramedImage out;
  out.transform = {r0, c0, r1 - r0 + 1, c1 - c0 + 1, frame_size};
  PlanarImage crop(r1 - r0 + 1, c1 - c0 + 1, image.channels);
  PlanarImage mask_crop(crop.height, crop.width, 1);
  for (int y = 0; y < crop.height; ++y)
    for (int x = 0; x < crop.width; ++x) {
      for (int c = 0; c < image.channels; ++c) crop.at(c, y, x) = image.at(c, y + r0, x + c0);
      mask_crop.at(0, y, x) = mask(y + r0, x + c0) ? 1.0f : 0.0f;
    }
  out.image = resize_bilinear(crop, frame_size, frame_size);
  const PlanarImage m = resize_bilinear(mask_crop, frame_size, frame_size);
  out.mask = BinaryMask(frame_size, frame_size);
  for (std::size_t i = 0; i < out.mask.bits.size(); ++i) out.mask.bits[i] = m.data[i] >= 0.5f ? 1 : 0;
  return out;
}

PatchSet split_patches(const PlanarImage& frame, StreamTag stream) {
  if (frame.height != kFrameSize || frame.width != kFrameSize)
    throw ShapeError("split_patches: expected a 700x700 frame");
  PatchSet set;
  set.stream = stream;
  for (int p = 0; p < kPatchCount; ++p) {
    const PatchOrigin o = kPatchOrigins[p];
    PlanarImage patch(kPatchSize, kPatchSize, frame.channels);
    for (int c = 0; c < frame.channels; ++c)
      for (int y = 0; y < kPatchSize; ++y) {
        const float* src = &frame.data[(static_cast<std::size_t>(c) * kFrameSize + y + o.row) * kFrameSize + o.col];
        std::copy(src, src + kPatchSize, &patch.data[(static_cast<std::size_t>(c) * kPatchSize + y) * kPatchSize]);
      }
    set.patches[p] = std::move(patch);
  }
  return set;
}

std::array<BinaryMask, kPatchCount> split_mask(const BinaryMask& frame) {
  if (frame.height != kFrameSize || frame.width != kFrameSize)
    throw ShapeError("split_mask: expected a 700x700 frame");
  std::array<BinaryMask, kPatchCount> out;
  for (int p = 0; p < kPatchCount; ++p) {
    const PatchOrigin o = kPatchOrigins[p];
    out[p] = BinaryMask(kPatchSize, kPatchSize);
    for (int y = 0; y < kPatchSize; ++y)
      for (int x = 0; x < kPatchSize; ++x) out[p].set(y, x, frame(y + o.row, x + o.col));
  }
  return out;
}

PlanarImage merge_patches(const PatchSet& ma, const PatchSet& hm) {
  for (int p = 0; p < kPatchCount; ++p) {
    if (ma.origins[p] != kPatchOrigins[p] || hm.origins[p] != kPatchOrigins[p])
      throw ShapeError("merge_patches: patch origins are not aligned");
    for (const PlanarImage* img : {&ma.patches[p], &hm.patches[p]})
      if (img->height != kPatchSize || img->width != kPatchSize || img->channels != 1)
        throw ShapeError("merge_patches: expected single-channel 500x500 score patches");
  }
  PlanarImage out(kFrameSize, kFrameSize, 1, -std::numeric_limits<float>::infinity());
  for (int p = 0; p < kPatchCount; ++p) {
    const PatchOrigin o = ma.origins[p];
    for (int y = 0; y < kPatchSize; ++y)
      for (int x = 0; x < kPatchSize; ++x) {
        const float merged = std::max(ma.patches[p].at(0, y, x), hm.patches[p].at(0, y, x));
        float& dst = out.at(0, y + o.row, x + o.col);
        dst = std::max(dst, merged);
      }
  }
  return out;
}

RoiBox patch_to_frame(const RoiBox& box, int patch_index) {
  const PatchOrigin o = kPatchOrigins.at(static_cast<std::size_t>(patch_index));
  return {box.r + o.row, box.c + o.col, box.h, box.w};
}

}  // namespace redlesion
