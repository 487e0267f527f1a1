#pragma once

#include <optional>
#include <string>
#include <vector>

#include "redlesion/box.hpp"
#include "redlesion/image.hpp"

namespace redlesion {

enum class GtFormat { MaskPng, BoxJson };

std::string_view to_string(GtFormat f);
GtFormat gt_format_from_string(std::string_view s);

struct ManifestEntry {
  std::string id;
  std::string image;
  std::optional<std::string> ma_gt;
  std::optional<std::string> hm_gt;
  std::optional<std::string> vessel_gt;  // mask-png, used to train the segmenter
  GtFormat gt_format = GtFormat::MaskPng;
  bool dr = false;  // label: DR | noDR
};

struct DatasetManifest {
  std::string normalization = "overall-mean";  // overall-mean | per-patch-mean
  std::vector<ManifestEntry> entries;
};

/// Reads the JSON manifest. Relative paths resolve against the manifest's
/// directory; every referenced file must exist and ids must be unique.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

/// mask-png: each 8-connected component becomes one lesion box.
/// box-json: {"lesions": [{"r":..,"c":..,"h":..,"w":..}, ...]} (or a bare array).
/// Boxes are checked against (height, width); mask dimensions must match.
std::vector<RoiBox> ingest_ground_truth(const std::string& path, GtFormat format, int height, int width);

void write_boxes_json(const std::string& path, const std::vector<RoiBox>& boxes);

}  // namespace redlesion
