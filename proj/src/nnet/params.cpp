#include "redlesion/nnet/params.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "redlesion/error.hpp"

namespace redlesion::nnet {

int ParamSet::add(std::string name, std::vector<int> shape, int fan_in, double init_std) {
  Parameter p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  const std::size_t n = std::accumulate(p.shape.begin(), p.shape.end(), std::size_t{1}, std::multiplies<>());
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.velocity.assign(n, 0.0);
  p.fan_in = fan_in;
  p.init_std = init_std;
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParamSet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    std::fill(p.velocity.begin(), p.velocity.end(), 0.0);
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
    if (p.fan_in == 0) {
      std::fill(p.value.begin(), p.value.end(), 0.0);
      continue;
    }
    const double sd = p.init_std > 0.0 ? p.init_std : std::sqrt(2.0 / p.fan_in);
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : p.value) v = dist(rng);
  }
  touch();
}

bool ParamSet::all_finite() const {
  for (const auto& p : params_)
    for (double v : p.value)
      if (!std::isfinite(v)) return false;
  return true;
}

void sgd_momentum_step(ParamSet& params, double lr, double momentum) {
  for (const auto& p : params)
    for (double g : p.grad)
      if (!std::isfinite(g)) throw ModelError("sgd_momentum_step: non-finite gradient in " + p.name);
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.velocity[i] = momentum * p.velocity[i] + p.grad[i];
      p.value[i] -= lr * p.velocity[i];
    }
  }
  params.touch();
}

}  // namespace redlesion::nnet
