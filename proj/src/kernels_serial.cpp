#include <algorithm>
#include <limits>

#include "redlesion/kernels.hpp"

namespace redlesion::kernels::serial {

void gaussian_rows(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights) {
  const int radius = static_cast<int>(weights.size()) / 2;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int sx = std::clamp(x + k, 0, width - 1);
        acc += weights[k + radius] * in[static_cast<std::size_t>(y) * width + sx];
      }
      out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
}

void gaussian_cols(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights) {
  const int radius = static_cast<int>(weights.size()) / 2;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int sy = std::clamp(y + k, 0, height - 1);
        acc += weights[k + radius] * in[static_cast<std::size_t>(sy) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
}

namespace {

template <class Pick>
void extremum_filter(std::span<const float> in, std::span<float> out, int height, int width,
                     std::span<const Offset> offsets, float init, Pick pick) {
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      float best = init;
      for (const Offset& o : offsets) {
        const int sy = y + o.dy;
        const int sx = x + o.dx;
        if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
        best = pick(best, in[static_cast<std::size_t>(sy) * width + sx]);
      }
      out[static_cast<std::size_t>(y) * width + x] = best;
    }
  }
}

}  // namespace

void max_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets) {
  extremum_filter(in, out, height, width, offsets, -std::numeric_limits<float>::infinity(),
                  [](float a, float b) { return std::max(a, b); });
}

void min_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets) {
  extremum_filter(in, out, height, width, offsets, std::numeric_limits<float>::infinity(),
                  [](float a, float b) { return std::min(a, b); });
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const int k = g.kernel;
  const int p = g.pad();
  for (int co = 0; co < g.out_channels; ++co) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        double acc = bias[co];
        for (int ci = 0; ci < g.in_channels; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            const int sy = y + ky - p;
            if (sy < 0 || sy >= g.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = x + kx - p;
              if (sx < 0 || sx >= g.width) continue;
              acc += weight[((static_cast<std::size_t>(co) * g.in_channels + ci) * k + ky) * k + kx] *
                     in[(static_cast<std::size_t>(ci) * g.height + sy) * g.width + sx];
            }
          }
        }
        out[(static_cast<std::size_t>(co) * g.height + y) * g.width + x] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const int k = g.kernel;
  const int p = g.pad();
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (int co = 0; co < g.out_channels; ++co) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const double go = grad_out[(static_cast<std::size_t>(co) * g.height + y) * g.width + x];
        grad_bias[co] += go;
        for (int ci = 0; ci < g.in_channels; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            const int sy = y + ky - p;
            if (sy < 0 || sy >= g.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = x + kx - p;
              if (sx < 0 || sx >= g.width) continue;
              const std::size_t wi = ((static_cast<std::size_t>(co) * g.in_channels + ci) * k + ky) * k + kx;
              const std::size_t ii = (static_cast<std::size_t>(ci) * g.height + sy) * g.width + sx;
              grad_weight[wi] += go * in[ii];
              if (!grad_in.empty()) grad_in[ii] += go * weight[wi];
            }
          }
        }
      }
    }
  }
}

void gemm(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      c[static_cast<std::size_t>(i) * n + j] += acc;
    }
}

}  // namespace redlesion::kernels::serial
