#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "redlesion/kernels.hpp"

namespace redlesion::kernels::omp {

void gaussian_rows(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights) {
  const int radius = static_cast<int>(weights.size()) / 2;
  const int taps = static_cast<int>(weights.size());
#pragma omp parallel
  {
    // Row padded by clamping so the tap loop has no branches.
    std::vector<float> padded(static_cast<std::size_t>(width) + 2 * radius);
    std::vector<double> acc(width);
#pragma omp for schedule(static)
    for (int y = 0; y < height; ++y) {
      const float* row = in.data() + static_cast<std::size_t>(y) * width;
      for (int i = 0; i < width + 2 * radius; ++i) padded[i] = row[std::clamp(i - radius, 0, width - 1)];
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = 0; k < taps; ++k) {
        const double wk = weights[k];
        const float* src = padded.data() + k;
#pragma omp simd
        for (int x = 0; x < width; ++x) acc[x] += wk * src[x];
      }
      float* dst = out.data() + static_cast<std::size_t>(y) * width;
      for (int x = 0; x < width; ++x) dst[x] = static_cast<float>(acc[x]);
    }
  }
}

void gaussian_cols(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights) {
  const int radius = static_cast<int>(weights.size()) / 2;
  const int taps = static_cast<int>(weights.size());
#pragma omp parallel
  {
    std::vector<double> acc(width);
#pragma omp for schedule(static)
    for (int y = 0; y < height; ++y) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = 0; k < taps; ++k) {
        const int sy = std::clamp(y + k - radius, 0, height - 1);
        const double wk = weights[k];
        const float* src = in.data() + static_cast<std::size_t>(sy) * width;
#pragma omp simd
        for (int x = 0; x < width; ++x) acc[x] += wk * src[x];
      }
      float* dst = out.data() + static_cast<std::size_t>(y) * width;
      for (int x = 0; x < width; ++x) dst[x] = static_cast<float>(acc[x]);
    }
  }
}

namespace {

template <bool IsMax>
void shifted_extremum(const float* in, float* out_row, int y, int height, int width,
                      std::span<const Offset> offsets) {
  for (const Offset& o : offsets) {
    const int sy = y + o.dy;
    if (sy < 0 || sy >= height) continue;
    const int x0 = std::max(0, -o.dx);
    const int x1 = std::min(width, width - o.dx);
    const float* src = in + static_cast<std::size_t>(sy) * width + o.dx;
#pragma omp simd
    for (int x = x0; x < x1; ++x) {
      if constexpr (IsMax)
        out_row[x] = std::max(out_row[x], src[x]);
      else
        out_row[x] = std::min(out_row[x], src[x]);
    }
  }
}

template <bool IsMax>
void extremum_filter(std::span<const float> in, std::span<float> out, int height, int width,
                     std::span<const Offset> offsets) {
  const float init = IsMax ? -std::numeric_limits<float>::infinity() : std::numeric_limits<float>::infinity();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    float* row = out.data() + static_cast<std::size_t>(y) * width;
    std::fill(row, row + width, init);
    shifted_extremum<IsMax>(in.data(), row, y, height, width, offsets);
  }
}

}  // namespace

void max_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets) {
  extremum_filter<true>(in, out, height, width, offsets);
}

void min_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets) {
  extremum_filter<false>(in, out, height, width, offsets);
}

void max_accumulate(std::span<const float> in, std::span<float> out, int height, int width,
                    std::span<const Offset> offsets) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y)
    shifted_extremum<true>(in.data(), out.data() + static_cast<std::size_t>(y) * width, y, height, width, offsets);
}

namespace {

constexpr int kColBlock = 512;
constexpr int kDepthBlock = 256;

// c[m x n] += op(a) * b where op(a)(i, p) = a_at(i, p). Four rows of c are
// updated per pass over a depth block so each b row is loaded once per four
// output rows.
template <class AAt>
void gemm_kernel(int m, int n, int k, AAt a_at, const double* b, int ldb, double* c, int ldc) {
  const int col_blocks = (n + kColBlock - 1) / kColBlock;
  const int row_groups = (m + 3) / 4;
#pragma omp parallel for collapse(2) schedule(static)
  for (int jb = 0; jb < col_blocks; ++jb) {
    for (int ig = 0; ig < row_groups; ++ig) {
      const int j0 = jb * kColBlock;
      const int nj = std::min(kColBlock, n - j0);
      const int i0 = ig * 4;
      const int rows = std::min(4, m - i0);
      for (int p0 = 0; p0 < k; p0 += kDepthBlock) {
        const int p1 = std::min(k, p0 + kDepthBlock);
        if (rows == 4) {
          double* __restrict c0 = c + static_cast<std::size_t>(i0) * ldc + j0;
          double* __restrict c1 = c0 + ldc;
          double* __restrict c2 = c1 + ldc;
          double* __restrict c3 = c2 + ldc;
          for (int p = p0; p < p1; ++p) {
            const double a0 = a_at(i0, p);
            const double a1 = a_at(i0 + 1, p);
            const double a2 = a_at(i0 + 2, p);
            const double a3 = a_at(i0 + 3, p);
            const double* __restrict bp = b + static_cast<std::size_t>(p) * ldb + j0;
#pragma omp simd
            for (int j = 0; j < nj; ++j) {
              const double bj = bp[j];
              c0[j] += a0 * bj;
              c1[j] += a1 * bj;
              c2[j] += a2 * bj;
              c3[j] += a3 * bj;
            }
          }
        } else {
          for (int r = 0; r < rows; ++r) {
            double* __restrict cr = c + static_cast<std::size_t>(i0 + r) * ldc + j0;
            for (int p = p0; p < p1; ++p) {
              const double ar = a_at(i0 + r, p);
              const double* __restrict bp = b + static_cast<std::size_t>(p) * ldb + j0;
#pragma omp simd
              for (int j = 0; j < nj; ++j) cr[j] += ar * bp[j];
            }
          }
        }
      }
    }
  }
}

// col[(ci*k*k + ky*k + kx) * hw + y*w + x] = in[ci][y+ky-p][x+kx-p] (zero outside)
void im2col(const ConvGeometry& g, const double* in, double* col) {
  const int k = g.kernel;
  const int p = g.pad();
  const std::size_t hw = static_cast<std::size_t>(g.height) * g.width;
  const int rows = g.in_channels * k * k;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int ci = r / (k * k);
    const int ky = (r / k) % k;
    const int kx = r % k;
    double* dst = col + r * hw;
    const double* src = in + ci * hw;
    for (int y = 0; y < g.height; ++y) {
      const int sy = y + ky - p;
      double* drow = dst + static_cast<std::size_t>(y) * g.width;
      if (sy < 0 || sy >= g.height) {
        std::fill(drow, drow + g.width, 0.0);
        continue;
      }
      const double* srow = src + static_cast<std::size_t>(sy) * g.width;
      for (int x = 0; x < g.width; ++x) {
        const int sx = x + kx - p;
        drow[x] = (sx >= 0 && sx < g.width) ? srow[sx] : 0.0;
      }
    }
  }
}

// Transposed layout: row[(y*w + x) * K + (ci*k*k + ky*k + kx)].
void im2row(const ConvGeometry& g, const double* in, double* row) {
  const int k = g.kernel;
  const int p = g.pad();
  const std::size_t hw = static_cast<std::size_t>(g.height) * g.width;
  const int kk = g.in_channels * k * k;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      double* dst = row + (static_cast<std::size_t>(y) * g.width + x) * kk;
      for (int ci = 0; ci < g.in_channels; ++ci) {
        const double* src = in + ci * hw;
        for (int ky = 0; ky < k; ++ky) {
          const int sy = y + ky - p;
          for (int kx = 0; kx < k; ++kx) {
            const int sx = x + kx - p;
            *dst++ = (sy >= 0 && sy < g.height && sx >= 0 && sx < g.width)
                         ? src[static_cast<std::size_t>(sy) * g.width + sx]
                         : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: grad_in[ci][sy][sx] += col[...].
void col2im(const ConvGeometry& g, const double* col, double* grad_in) {
  const int k = g.kernel;
  const int p = g.pad();
  const std::size_t hw = static_cast<std::size_t>(g.height) * g.width;
  // Channels are independent, so they can be split across threads.
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < g.in_channels; ++ci) {
    double* dst = grad_in + ci * hw;
    std::fill(dst, dst + hw, 0.0);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        for (int y = 0; y < g.height; ++y) {
          const int sy = y + ky - p;
          if (sy < 0 || sy >= g.height) continue;
          const int x0 = std::max(0, p - kx);
          const int x1 = std::min(g.width, g.width + p - kx);
          double* drow = dst + static_cast<std::size_t>(sy) * g.width + (kx - p);
          const double* srow = src + static_cast<std::size_t>(y) * g.width;
#pragma omp simd
          for (int x = x0; x < x1; ++x) drow[x] += srow[x];
        }
      }
    }
  }
}

}  // namespace

void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
  gemm_kernel(
      m, n, k, [a, lda](int i, int p) { return a[static_cast<std::size_t>(i) * lda + p]; }, b, ldb, c, ldc);
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
  gemm_kernel(
      m, n, k, [a, lda](int i, int p) { return a[static_cast<std::size_t>(p) * lda + i]; }, b, ldb, c, ldc);
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const int hw = g.height * g.width;
  const int kk = g.in_channels * g.kernel * g.kernel;
  for (int co = 0; co < g.out_channels; ++co)
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(co) * hw, out.begin() + static_cast<std::ptrdiff_t>(co + 1) * hw,
              bias[co]);
  if (g.kernel == 1) {
    gemm_nn(g.out_channels, hw, kk, weight.data(), kk, in.data(), hw, out.data(), hw);
    return;
  }
  std::vector<double> col(static_cast<std::size_t>(kk) * hw);
  im2col(g, in.data(), col.data());
  gemm_nn(g.out_channels, hw, kk, weight.data(), kk, col.data(), hw, out.data(), hw);
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const int hw = g.height * g.width;
  const int kk = g.in_channels * g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < g.out_channels; ++co) {
    const double* go = grad_out.data() + static_cast<std::size_t>(co) * hw;
    double s = 0.0;
    for (int i = 0; i < hw; ++i) s += go[i];
    grad_bias[co] += s;
  }
  if (g.kernel == 1) {
    // grad_w[co][ci] += sum_n g[co][n] * in[ci][n]; in is already the "row" operand transposed.
    std::vector<double> row(static_cast<std::size_t>(hw) * kk);
    for (int ci = 0; ci < kk; ++ci)
      for (int i = 0; i < hw; ++i) row[static_cast<std::size_t>(i) * kk + ci] = in[static_cast<std::size_t>(ci) * hw + i];
    gemm_nn(g.out_channels, kk, hw, grad_out.data(), hw, row.data(), kk, grad_weight.data(), kk);
    if (!grad_in.empty()) {
      std::fill(grad_in.begin(), grad_in.end(), 0.0);
      gemm_tn(kk, hw, g.out_channels, weight.data(), kk, grad_out.data(), hw, grad_in.data(), hw);
    }
    return;
  }
  {
    std::vector<double> row(static_cast<std::size_t>(hw) * kk);
    im2row(g, in.data(), row.data());
    gemm_nn(g.out_channels, kk, hw, grad_out.data(), hw, row.data(), kk, grad_weight.data(), kk);
  }
  if (!grad_in.empty()) {
    std::vector<double> col(static_cast<std::size_t>(kk) * hw, 0.0);
    gemm_tn(kk, hw, g.out_channels, weight.data(), kk, grad_out.data(), hw, col.data(), hw);
    col2im(g, col.data(), grad_in.data());
  }
}

}  // namespace redlesion::kernels::omp
