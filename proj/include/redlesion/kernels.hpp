#pragma once

// Hot loops of the pipeline. Every kernel exists twice: `serial` is the
// straightforward per-element reference kept for testing, `omp` is the
// blocked/threaded version used by the library. Both produce the same
// values: bit-identical for the min/max filters, within floating-point
// reassociation for the sums.

#include <span>

namespace redlesion::kernels {

struct Offset {
  int dy = 0;
  int dx = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Stride-1 "same" convolution with an odd square kernel and zero padding.
struct ConvGeometry {
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int out_channels = 0;
  int kernel = 3;
  int pad() const { return kernel / 2; }
  long long weight_count() const {
    return static_cast<long long>(out_channels) * in_channels * kernel * kernel;
  }
};

namespace serial {

// out(y, x) = sum_k weights[k] * in(y, clamp(x + k - R)), R = weights.size() / 2.
void gaussian_rows(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights);
void gaussian_cols(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights);

// out(p) = max / min over in-bounds in(p + offset).
void max_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets);
void min_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets);

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
// Accumulates into grad_weight / grad_bias; overwrites grad_in when non-empty.
void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias);

void gemm(int m, int n, int k, const double* a, const double* b, double* c);  // c += a * b

}  // namespace serial

namespace omp {

void gaussian_rows(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights);
void gaussian_cols(std::span<const float> in, std::span<float> out, int height, int width,
                   std::span<const double> weights);

void max_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets);
void min_filter(std::span<const float> in, std::span<float> out, int height, int width,
                std::span<const Offset> offsets);
/// In-place out = max(out, shifted in) for the given extra offsets.
void max_accumulate(std::span<const float> in, std::span<float> out, int height, int width,
                    std::span<const Offset> offsets);

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias);

// Row-major products, accumulating into c.
// gemm_nn: c[m x n] += a[m x k] * b[k x n]
// gemm_tn: c[m x n] += a[k x m]^T * b[k x n]
void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc);
void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc);

}  // namespace omp

}  // namespace redlesion::kernels
