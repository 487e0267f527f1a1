#include "redlesion/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>

#include "redlesion/error.hpp"

namespace redlesion {

namespace {

using Member = std::variant<double PipelineConfig::*, int PipelineConfig::*, bool PipelineConfig::*,
                            std::string PipelineConfig::*, std::uint64_t PipelineConfig::*>;

struct Field {
  const char* key;
  Member member;
};

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> f{
      {"alpha", &C::alpha},
      {"tau", &C::tau},
      {"gamma", &C::gamma},
      {"sigma_divisor", &C::sigma_divisor},
      {"rpoly_degree", &C::rpoly_degree},
      {"rpoly_window", &C::rpoly_window},
      {"denoise_sigma", &C::denoise_sigma},
      {"line_length_min", &C::line_length_min},
      {"line_length_max", &C::line_length_max},
      {"line_length_step", &C::line_length_step},
      {"line_angle_step", &C::line_angle_step},
      {"k_max", &C::k_max},
      {"min_small_px", &C::min_small_px},
      {"dark_threshold", &C::dark_threshold},
      {"min_large_px", &C::min_large_px},
      {"vessel_source", &C::vessel_source},
      {"vessel_threshold", &C::vessel_threshold},
      {"theta_ma", &C::theta_ma},
      {"theta_hm", &C::theta_hm},
      {"nms_ma", &C::nms_ma},
      {"nms_hm", &C::nms_hm},
      {"nms_image", &C::nms_image},
      {"box_extend", &C::box_extend},
      {"regress", &C::regress},
      {"n_images", &C::n_images},
      {"r_rois", &C::r_rois},
      {"pos_fraction", &C::pos_fraction},
      {"momentum", &C::momentum},
      {"det_lr", &C::det_lr},
      {"lr_decay_at", &C::lr_decay_at},
      {"lr_decay", &C::lr_decay},
      {"det_iterations", &C::det_iterations},
      {"drop_ma", &C::drop_ma},
      {"drop_hm", &C::drop_hm},
      {"augment", &C::augment},
      {"augment_angles", &C::augment_angles},
      {"tile_size", &C::tile_size},
      {"det_widths", &C::det_widths},
      {"det_hidden", &C::det_hidden},
      {"normalization", &C::normalization},
      {"seg_lr", &C::seg_lr},
      {"seg_epochs", &C::seg_epochs},
      {"seg_batch", &C::seg_batch},
      {"seg_tile", &C::seg_tile},
      {"seg_tiles_per_patch", &C::seg_tiles_per_patch},
      {"seg_widths", &C::seg_widths},
      {"match_mode", &C::match_mode},
      {"iou_min", &C::iou_min},
      {"seed", &C::seed},
      {"threads", &C::threads},
  };
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require(bool ok, const char* key, const std::string& why) {
  if (!ok) throw ParameterError(std::string("config key '") + key + "': " + why);
}

}  // namespace

std::array<int, 4> parse_widths(const std::string& text) {
  std::array<int, 4> w{};
  std::stringstream ss(text);
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 4) throw ParameterError("width list '" + text + "' has more than 4 entries");
    try {
      w[static_cast<std::size_t>(n)] = std::stoi(trim(item));
    } catch (const std::exception&) {
      throw ParameterError("width list '" + text + "' has a non-integer entry");
    }
    if (w[static_cast<std::size_t>(n)] <= 0) throw ParameterError("width list '" + text + "' has a non-positive entry");
    ++n;
  }
  if (n != 4) throw ParameterError("width list '" + text + "' must have 4 entries");
  return w;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ParameterError("list '" + text + "' has a non-numeric entry");
    }
  }
  return out;
}

void PipelineConfig::validate() const {
  require(std::isfinite(alpha) && std::isfinite(tau) && std::isfinite(gamma), "alpha", "equalisation constants must be finite");
  require(sigma_divisor > 0.0, "sigma_divisor", "must be > 0");
  require(rpoly_degree >= 1, "rpoly_degree", "must be >= 1");
  require(rpoly_window >= 1 && rpoly_window % 2 == 1, "rpoly_window", "must be a positive odd number");
  require(denoise_sigma > 0.0, "denoise_sigma", "must be > 0");
  require(line_length_min >= 1 && line_length_max >= line_length_min && line_length_step >= 1, "line_length_min",
          "need 1 <= min <= max and step >= 1");
  require(line_angle_step > 0.0 && line_angle_step <= 180.0, "line_angle_step", "must be in (0, 180]");
  require(k_max >= 1, "k_max", "must be >= 1");
  require(min_small_px >= 1, "min_small_px", "must be >= 1");
  require(dark_threshold >= 0.0 && dark_threshold <= 1.0, "dark_threshold", "must be in [0, 1]");
  require(min_large_px >= 1, "min_large_px", "must be >= 1");
  require(vessel_source == "fcn" || vessel_source == "hessian", "vessel_source", "must be fcn or hessian");
  require(vessel_threshold > 0.0 && vessel_threshold < 1.0, "vessel_threshold", "must be in (0, 1)");
  require(theta_ma >= 0.0 && theta_hm >= 0.0, "theta_ma", "thresholds must be >= 0");
  for (const auto& [key, v] : {std::pair{"nms_ma", nms_ma}, std::pair{"nms_hm", nms_hm}, std::pair{"nms_image", nms_image}})
    require(v >= 0.0 && v <= 1.0, key, "must be in [0, 1]");
  require(box_extend >= 0.0, "box_extend", "must be >= 0");
  require(n_images >= 1, "n_images", "must be >= 1");
  require(r_rois >= 1, "r_rois", "must be >= 1");
  require(pos_fraction >= 0.0 && pos_fraction <= 1.0, "pos_fraction", "must be in [0, 1]");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must be in [0, 1)");
  require(det_lr > 0.0, "det_lr", "must be > 0");
  require(lr_decay_at >= 0.0 && lr_decay_at <= 1.0, "lr_decay_at", "must be in [0, 1]");
  require(lr_decay > 0.0, "lr_decay", "must be > 0");
  require(det_iterations >= 0, "det_iterations", "must be >= 0");
  require(drop_ma >= 0.0 && drop_ma < 1.0, "drop_ma", "must be in [0, 1)");
  require(drop_hm >= 0.0 && drop_hm < 1.0, "drop_hm", "must be in [0, 1)");
  parse_double_list(augment_angles);
  require(tile_size == 0 || tile_size >= 16, "tile_size", "must be 0 or >= 16");
  parse_widths(det_widths);
  require(det_hidden >= 1, "det_hidden", "must be >= 1");
  require(normalization == "overall-mean" || normalization == "per-patch-mean", "normalization",
          "must be overall-mean or per-patch-mean");
  require(seg_lr > 0.0, "seg_lr", "must be > 0");
  require(seg_epochs >= 0, "seg_epochs", "must be >= 0");
  require(seg_batch >= 1, "seg_batch", "must be >= 1");
  require(seg_tile == 0 || seg_tile >= 16, "seg_tile", "must be 0 or >= 16");
  require(seg_tiles_per_patch >= 1, "seg_tiles_per_patch", "must be >= 1");
  parse_widths(seg_widths);
  match_mode_from_string(match_mode);
  require(iou_min > 0.0 && iou_min <= 1.0, "iou_min", "must be in (0, 1]");
  require(threads >= 0, "threads", "must be >= 0");
}

EqualizationParams PipelineConfig::equalization() const { return {alpha, tau, gamma, sigma_divisor}; }

SmallCandidateParams PipelineConfig::small_candidates() const {
  SmallCandidateParams p;
  p.rpoly = {rpoly_degree, rpoly_window};
  p.denoise_sigma = denoise_sigma;
  p.lengths.clear();
  for (int l = line_length_min; l <= line_length_max; l += line_length_step) p.lengths.push_back(l);
  p.angles.clear();
  for (double a = 0.0; a < 180.0 - 1e-9; a += line_angle_step) p.angles.push_back(a);
  p.k_max = k_max;
  p.min_pixels = min_small_px;
  return p;
}

DetTrainConfig PipelineConfig::detector_training(LesionClass stream) const {
  DetTrainConfig c;
  c.iterations = det_iterations;
  c.lr = det_lr;
  c.momentum = momentum;
  c.lr_decay_at = lr_decay_at;
  c.lr_decay = lr_decay;
  c.sampling = {n_images, r_rois, pos_fraction};
  c.box_extend = box_extend;
  c.augment = augment;
  c.angles = parse_double_list(augment_angles);
  c.tile_size = tile_size;
  c.normalization = normalization == "per-patch-mean" ? InputNormalization::PerPatchMean : InputNormalization::OverallMean;
  c.seed = nnet::mix_seed(seed, stream == LesionClass::MA ? 11 : 12);
  return c;
}

DetectConfig PipelineConfig::detection(LesionClass stream) const {
  DetectConfig c;
  c.theta = stream == LesionClass::MA ? theta_ma : theta_hm;
  c.nms_iou = stream == LesionClass::MA ? nms_ma : nms_hm;
  c.box_extend = box_extend;
  c.regress = regress;
  return c;
}

nnet::DetNetSpec PipelineConfig::detector_spec(LesionClass stream) const {
  nnet::DetNetSpec s;
  s.widths = parse_widths(det_widths);
  s.hidden = det_hidden;
  s.dropout = stream == LesionClass::MA ? drop_ma : drop_hm;
  s.per_patch_mean = normalization == "per-patch-mean";
  return s;
}

nnet::SegNetSpec PipelineConfig::segmenter_spec() const {
  nnet::SegNetSpec s;
  s.widths = parse_widths(seg_widths);
  return s;
}

nnet::SegTrainConfig PipelineConfig::segmenter_training() const {
  nnet::SegTrainConfig c;
  c.epochs = seg_epochs;
  c.batch_size = seg_batch;
  c.lr = seg_lr;
  c.momentum = momentum;
  c.seed = nnet::mix_seed(seed, 10);
  return c;
}

MatchPolicy PipelineConfig::match_policy() const { return {match_mode_from_string(match_mode), iou_min}; }

std::string format_config(const PipelineConfig& config) {
  std::ostringstream out;
  for (const Field& f : fields()) {
    out << f.key << " = ";
    std::visit(
        [&](auto member) {
          const auto& v = config.*member;
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, double>) out << format_double(v);
          else if constexpr (std::is_same_v<T, bool>) out << (v ? "true" : "false");
          else out << v;
        },
        f.member);
    out << '\n';
  }
  return out.str();
}

PipelineConfig parse_config(const std::string& text, const std::string& origin) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ParameterError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const Field& f : fields())
      if (key == f.key) field = &f;
    if (!field) throw ParameterError(where + ": unknown key '" + key + "'");
    std::visit(
        [&](auto member) {
          auto& v = config.*member;
          using T = std::decay_t<decltype(v)>;
          try {
            std::size_t used = 0;
            if constexpr (std::is_same_v<T, double>) {
              v = std::stod(value, &used);
            } else if constexpr (std::is_same_v<T, int>) {
              v = std::stoi(value, &used);
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
              v = std::stoull(value, &used);
            } else if constexpr (std::is_same_v<T, bool>) {
              if (value != "true" && value != "false") throw std::invalid_argument("bool");
              v = value == "true";
              used = value.size();
            } else {
              v = value;
              used = value.size();
            }
            if (used != value.size()) throw std::invalid_argument("trailing");
          } catch (const std::exception&) {
            throw ParameterError(where + ": bad value '" + value + "' for key '" + key + "'");
          }
        },
        field->member);
  }
  return config;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void save_config(const std::string& path, const PipelineConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  out << format_config(config);
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
  for (const Field& f : fields()) {
    const bool same = std::visit([&](auto member) { return a.*member == b.*member; }, f.member);
    if (!same) return false;
  }
  return true;
}

}  // namespace redlesion
