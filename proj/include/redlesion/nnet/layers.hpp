#pragma once

// Stateless layer primitives. Forward functions return what backward needs;
// backward functions accumulate parameter gradients into Parameter::grad and
// return the gradient with respect to the layer input.

#include <cstdint>
#include <vector>

#include "redlesion/box.hpp"
#include "redlesion/nnet/params.hpp"
#include "redlesion/nnet/tensor.hpp"

namespace redlesion::nnet {

// Same-size convolution, odd square kernel, stride 1, zero padding.
// weight shape {out, in, k, k}, bias shape {out}.
Tensor4 conv2d_forward(const Tensor4& x, const Parameter& weight, const Parameter& bias);
Tensor4 conv2d_backward(const Tensor4& x, Parameter& weight, Parameter& bias, const Tensor4& grad_out,
                        bool need_input_grad = true);

Tensor4 relu_forward(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);

/// 2x2 max-pool, stride 2, odd trailing rows/cols dropped. `argmax` receives
/// the flat input index of each output's maximum (first in raster order on ties).
Tensor4 maxpool2_forward(const Tensor4& x, std::vector<std::size_t>& argmax);
Tensor4 maxpool2_backward(const Tensor4& x_shape, const std::vector<std::size_t>& argmax, const Tensor4& grad_out);

/// Fully connected on the flattened sample: weight shape {in, out}, bias {out};
/// output shape (n, out, 1, 1).
Tensor4 linear_forward(const Tensor4& x, const Parameter& weight, const Parameter& bias);
Tensor4 linear_backward(const Tensor4& x, Parameter& weight, Parameter& bias, const Tensor4& grad_out);

/// Inverted dropout: in train mode each unit is zeroed with probability `rate`
/// and survivors are scaled by 1 / (1 - rate); identity otherwise.
Tensor4 dropout_forward(const Tensor4& x, double rate, bool train, std::uint64_t seed, std::vector<std::uint8_t>& keep);
Tensor4 dropout_backward(const Tensor4& grad_out, double rate, bool train, const std::vector<std::uint8_t>& keep);

/// Bilinear resampling of every plane to (out_h, out_w), pixel-centre aligned.
Tensor4 upsample_bilinear_forward(const Tensor4& x, int out_h, int out_w);
Tensor4 upsample_bilinear_backward(const Tensor4& x_shape, const Tensor4& grad_out);

struct PooledRoi {
  int batch = 0;
  RoiBox box;  // input-image coordinates
};

/// Window of one ROI on the feature grid, half-open [row0, row1) x [col0, col1).
struct RoiWindow {
  int row0 = 0;
  int row1 = 0;
  int col0 = 0;
  int col1 = 0;
  bool degenerate = false;
};

RoiWindow roi_window(const RoiBox& box, double spatial_scale, int feat_h, int feat_w);

struct RoiPoolResult {
  Tensor4 output;                    // (rois, channels, out_h, out_w)
  std::vector<std::size_t> argmax;   // flat feature index per output element
  std::vector<std::uint8_t> degenerate;
};

/// ROI max-pooling. Bin (i, j) of a window with height H spans rows
/// [row0 + floor(i H / out_h), row0 + ceil((i + 1) H / out_h)).
RoiPoolResult roi_pool_forward(const Tensor4& features, const std::vector<PooledRoi>& rois, int out_h, int out_w,
                               double spatial_scale);
Tensor4 roi_pool_backward(const Tensor4& features_shape, const RoiPoolResult& pooled, const Tensor4& grad_out);

enum class Reduction { Sum, Mean };

struct LossResult {
  double loss = 0.0;
  Tensor4 grad;  // gradient of the loss w.r.t. the logits
};

/// Per-pixel softmax cross-entropy over the channel axis. Labels hold one
/// class index per (sample, pixel). Pixels are summed; samples are combined
/// by `batch_reduction`.
LossResult softmax_cross_entropy(const Tensor4& logits, const std::vector<int>& labels,
                                 Reduction batch_reduction = Reduction::Mean);

/// Softmax over channels for every (sample, pixel).
Tensor4 softmax(const Tensor4& logits);

}  // namespace redlesion::nnet
