#include "redlesion/nnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "redlesion/error.hpp"

namespace redlesion::nnet {

namespace {

constexpr char kMagic[] = "RLNET1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, nlohmann::json header, const ParamSet& params) {
  nlohmann::json list = nlohmann::json::array();
  for (const Parameter& p : params) list.push_back({{"name", p.name}, {"shape", p.shape}});
  header["params"] = list;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, kMagicLen);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter& p : params) {
    out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(p.velocity.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) throw IoError("not a model checkpoint: " + path);
  const std::uint64_t len = read_u64(in);
  if (!in || len > (1u << 26)) throw IoError("corrupt checkpoint header length: " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  CheckpointData data;
  try {
    data.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path + ": " + e.what());
  }
  if (!data.header.contains("params") || !data.header["params"].is_array())
    throw IoError("checkpoint header lacks a parameter list: " + path);
  for (const auto& p : data.header["params"]) {
    std::size_t n = 1;
    for (int d : p.at("shape").get<std::vector<int>>()) n *= static_cast<std::size_t>(d);
    std::vector<double> v(n), m(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint payload: " + path);
    data.values.push_back(std::move(v));
    data.velocities.push_back(std::move(m));
  }
  return data;
}

void apply_checkpoint(const CheckpointData& data, ParamSet& params) {
  const auto& list = data.header.at("params");
  if (static_cast<int>(list.size()) != params.size())
    throw ModelError("checkpoint holds " + std::to_string(list.size()) + " parameters, model expects " +
                     std::to_string(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (list[i].at("name").get<std::string>() != p.name || list[i].at("shape").get<std::vector<int>>() != p.shape)
      throw ModelError("checkpoint parameter " + list[i].at("name").get<std::string>() + " does not match model parameter " + p.name);
    p.value = data.values[i];
    p.velocity = data.velocities[i];
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
  params.touch();
}

}  // namespace redlesion::nnet
