#include "redlesion/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "redlesion/components.hpp"
#include "redlesion/error.hpp"

namespace redlesion {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(GtFormat f) { return f == GtFormat::MaskPng ? "mask-png" : "box-json"; }

GtFormat gt_format_from_string(std::string_view s) {
  if (s == "mask-png") return GtFormat::MaskPng;
  if (s == "box-json") return GtFormat::BoxJson;
  throw ParameterError("unknown gt_format '" + std::string(s) + "' (expected mask-png or box-json)");
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path + ": " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
  };
  DatasetManifest m;
  try {
    m.normalization = j.value("normalization", std::string("overall-mean"));
    if (m.normalization != "overall-mean" && m.normalization != "per-patch-mean")
      throw ParameterError("manifest " + path + ": normalization must be overall-mean or per-patch-mean");
    std::set<std::string> ids;
    std::size_t index = 0;
    for (const auto& e : j.at("entries")) {
      const std::string where = path + ": entry " + std::to_string(index++);
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      if (!ids.insert(entry.id).second) throw ParameterError(where + ": duplicate id '" + entry.id + "'");
      entry.image = resolve(e.at("image").get<std::string>());
      for (auto [key, slot] : {std::pair{"ma_gt", &entry.ma_gt}, std::pair{"hm_gt", &entry.hm_gt},
                               std::pair{"vessel_gt", &entry.vessel_gt}})
        if (e.contains(key) && !e[key].is_null()) *slot = resolve(e[key].get<std::string>());
      entry.gt_format = gt_format_from_string(e.value("gt_format", std::string("mask-png")));
      const std::string label = e.value("label", std::string(entry.ma_gt || entry.hm_gt ? "DR" : "noDR"));
      if (label != "DR" && label != "noDR") throw ParameterError(where + ": label must be DR or noDR");
      entry.dr = label == "DR";
      for (const auto* p : {&entry.image})
        if (!fs::exists(*p)) throw IoError(where + ": missing file " + *p);
      for (const auto* opt : {&entry.ma_gt, &entry.hm_gt, &entry.vessel_gt})
        if (*opt && !fs::exists(**opt)) throw IoError(where + ": missing file " + **opt);
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + path + ": " + e.what());
  }
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  json j;
  j["normalization"] = manifest.normalization;
  j["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    json o;
    o["id"] = e.id;
    o["image"] = e.image;
    if (e.ma_gt) o["ma_gt"] = *e.ma_gt;
    if (e.hm_gt) o["hm_gt"] = *e.hm_gt;
    if (e.vessel_gt) o["vessel_gt"] = *e.vessel_gt;
    o["gt_format"] = std::string(to_string(e.gt_format));
    o["label"] = e.dr ? "DR" : "noDR";
    j["entries"].push_back(o);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << j.dump(2) << '\n';
}

std::vector<RoiBox> ingest_ground_truth(const std::string& path, GtFormat format, int height, int width) {
  std::vector<RoiBox> boxes;
  if (format == GtFormat::MaskPng) {
    const BinaryMask mask = read_mask(path);
    if (mask.height != height || mask.width != width)
      throw ShapeError("ground-truth mask " + path + " is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                       ", image is " + std::to_string(height) + "x" + std::to_string(width));
    for (const Component& c : connected_components(mask)) boxes.push_back(clamped(RoiBox::from_extent(c.extent), height, width));
    return boxes;
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ground-truth file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw IoError("malformed ground-truth JSON " + path + " (byte " + std::to_string(e.byte) + "): " + e.what());
  }
  const json& list = j.is_array() ? j : j.value("lesions", json::array());
  std::size_t index = 0;
  for (const auto& b : list) {
    const std::string where = path + ": lesion " + std::to_string(index++);
    RoiBox box;
    try {
      box = {b.at("r").get<double>(), b.at("c").get<double>(), b.at("h").get<double>(), b.at("w").get<double>()};
    } catch (const json::exception& e) {
      throw IoError(where + ": " + e.what());
    }
    if (!box.valid()) throw IoError(where + ": non-positive size");
    if (box.top() < 0.0 || box.left() < 0.0 || box.bottom() > height || box.right() > width)
      throw IoError(where + ": box outside the " + std::to_string(height) + "x" + std::to_string(width) + " image");
    boxes.push_back(box);
  }
  return boxes;
}

void write_boxes_json(const std::string& path, const std::vector<RoiBox>& boxes) {
  json list = json::array();
  for (const RoiBox& b : boxes) list.push_back({{"r", b.r}, {"c", b.c}, {"h", b.h}, {"w", b.w}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << json{{"lesions", list}}.dump() << '\n';
}

}  // namespace redlesion
