#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "redlesion/box.hpp"
#include "redlesion/components.hpp"

namespace redlesion {

struct CandidateComponent {
  std::vector<Pixel> pixels;
  PixelExtent extent;
  RoiBox box;  // bounding box in patch coordinates
  std::size_t size() const { return pixels.size(); }
};

struct CandidateMap {
  BinaryMask mask;
  std::vector<CandidateComponent> components;

  std::vector<RoiBox> boxes() const;
};

/// Connected components of `mask` with at least `min_pixels` pixels.
CandidateMap candidate_map_from_mask(const BinaryMask& mask, std::size_t min_pixels);

/// One JSON object per line: {"patch":p,"r":..,"c":..,"h":..,"w":..,"pixels":n}.
void write_candidates_jsonl(std::ostream& out, const CandidateMap& map, int patch_index);

}  // namespace redlesion
