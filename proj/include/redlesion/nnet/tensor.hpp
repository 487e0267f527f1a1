#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace redlesion::nnet {

/// Dense (batch, channels, height, width) array of doubles.
struct Tensor4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }

  double& at(int i, int ch, int y, int x) { return data[index(i, ch, y, x)]; }
  double at(int i, int ch, int y, int x) const { return data[index(i, ch, y, x)]; }
  std::size_t index(int i, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x;
  }

  std::span<double> sample(int i) { return {data.data() + i * sample_size(), sample_size()}; }
  std::span<const double> sample(int i) const { return {data.data() + i * sample_size(), sample_size()}; }

  bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace redlesion::nnet
