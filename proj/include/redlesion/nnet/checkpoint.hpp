#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "redlesion/nnet/params.hpp"

namespace redlesion::nnet {

/// File layout: the line "RLNET1", an 8-byte little-endian header length, a
/// JSON header (kind, spec, seed, parameter names and shapes), then every
/// parameter's values followed by its momentum buffer as raw doubles.
struct CheckpointData {
  nlohmann::json header;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> velocities;
};

void write_checkpoint(const std::string& path, nlohmann::json header, const ParamSet& params);
CheckpointData read_checkpoint(const std::string& path);

/// Copies values and momentum into `params`; names and shapes must agree.
void apply_checkpoint(const CheckpointData& data, ParamSet& params);

}  // namespace redlesion::nnet
