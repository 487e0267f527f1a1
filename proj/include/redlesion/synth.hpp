#pragma once

#include <cstdint>
#include <vector>

#include "redlesion/box.hpp"
#include "redlesion/image.hpp"

namespace redlesion {

/// Synthetic fundus photographs with exact lesion and vessel ground truth.
struct SynthConfig {
  int size = 760;
  double fov_radius = 345.0;
  int vessel_trees = 6;
  int ma_min = 3;
  int ma_max = 8;
  int hm_min = 2;
  int hm_max = 5;
  bool lesions = true;
  bool full_fov = false;  // no aperture: the whole canvas is retina
};

struct SynthFundus {
  PlanarImage rgb;  // 3 channels, [0, 255]
  FovMask fov;
  BinaryMask vessels;
  BinaryMask ma;
  BinaryMask hm;
  std::vector<GroundTruthLesion> lesions;
  bool dr = false;
};

SynthFundus synthesize_fundus(const SynthConfig& config, std::uint64_t seed);

/// Small already-equalised patch (no aperture), for training-scale tests.
/// The equalisation blur uses the same absolute width as a 700 px frame.
struct SynthPatch {
  PlanarImage patch;
  FovMask fov;
  BinaryMask vessels;
  std::vector<GroundTruthLesion> lesions;
};

SynthPatch synthesize_patch(int size, int n_ma, int n_hm, int vessel_trees, std::uint64_t seed);

}  // namespace redlesion

#include <string>

#include "redlesion/dataset.hpp"

namespace redlesion {

/// Writes `count` images (the last `clean` of them without lesions) with
/// mask-png ground truth and a manifest.json into `dir`; ids are synth_000...
DatasetManifest write_synthetic_dataset(const std::string& dir, int count, int clean, const SynthConfig& config,
                                        std::uint64_t seed);

}  // namespace redlesion
