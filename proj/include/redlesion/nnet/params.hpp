#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace redlesion::nnet {

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> velocity;
  int fan_in = 0;          // 0 marks a bias (zero-initialised)
  double init_std = 0.0;   // overrides the He scale when positive

  std::size_t size() const { return value.size(); }
};

/// Owns every learnable tensor of a network. The version counter moves on
/// each optimiser step or reload and is used to reject stale forward caches.
class ParamSet {
 public:
  int add(std::string name, std::vector<int> shape, int fan_in, double init_std = 0.0);

  Parameter& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  const Parameter& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(params_.size()); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  void initialize(std::uint64_t seed);  // He normal weights, zero biases, zero velocity
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  bool all_finite() const;

 private:
  std::vector<Parameter> params_;
  std::uint64_t version_ = 0;
};

/// v = momentum * v + grad; value -= lr * v. Throws ModelError (and leaves
/// every parameter unchanged) if any gradient is non-finite.
void sgd_momentum_step(ParamSet& params, double lr, double momentum);

}  // namespace redlesion::nnet
