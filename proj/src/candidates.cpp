#include "redlesion/candidates.hpp"

#include <ostream>

#include <json.hpp>

namespace redlesion {

std::vector<RoiBox> CandidateMap::boxes() const {
  std::vector<RoiBox> out;
  out.reserve(components.size());
  for (const auto& c : components) out.push_back(c.box);
  return out;
}

CandidateMap candidate_map_from_mask(const BinaryMask& mask, std::size_t min_pixels) {
  CandidateMap map;
  map.mask = BinaryMask(mask.height, mask.width);
  for (Component& c : connected_components(mask)) {
    if (c.size() < min_pixels) continue;
    for (const Pixel& p : c.pixels) map.mask.set(p.y, p.x, true);
    CandidateComponent cc;
    cc.extent = c.extent;
    cc.box = RoiBox::from_extent(c.extent);
    cc.pixels = std::move(c.pixels);
    map.components.push_back(std::move(cc));
  }
  return map;
}

void write_candidates_jsonl(std::ostream& out, const CandidateMap& map, int patch_index) {
  for (const auto& c : map.components) {
    nlohmann::ordered_json j;
    j["patch"] = patch_index;
    j["r"] = c.box.r;
    j["c"] = c.box.c;
    j["h"] = c.box.h;
    j["w"] = c.box.w;
    j["pixels"] = c.size();
    out << j.dump() << '\n';
  }
}

}  // namespace redlesion
