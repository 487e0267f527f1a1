#include "redlesion/nnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "redlesion/error.hpp"
#include "redlesion/kernels.hpp"

namespace redlesion::nnet {

namespace {

kernels::ConvGeometry conv_geometry(const Tensor4& x, const Parameter& weight, const Parameter& bias) {
  if (weight.shape.size() != 4 || weight.shape[2] != weight.shape[3] || weight.shape[2] % 2 == 0)
    throw ShapeError("conv2d: weight must be {out, in, k, k} with odd k");
  if (weight.shape[1] != x.c) throw ShapeError("conv2d: input has " + std::to_string(x.c) + " channels, weight expects " + std::to_string(weight.shape[1]));
  if (bias.size() != static_cast<std::size_t>(weight.shape[0])) throw ShapeError("conv2d: bias size mismatch");
  return {x.c, x.h, x.w, weight.shape[0], weight.shape[2]};
}

struct Tap {
  int i0, i1;
  double t;
};

std::vector<Tap> bilinear_taps(int n_in, int n_out) {
  std::vector<Tap> taps(n_out);
  const double s = static_cast<double>(n_in) / n_out;
  for (int o = 0; o < n_out; ++o) {
    const double src = std::clamp((o + 0.5) * s - 0.5, 0.0, static_cast<double>(n_in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    taps[o] = {i0, std::min(i0 + 1, n_in - 1), src - i0};
  }
  return taps;
}

}  // namespace

Tensor4 conv2d_forward(const Tensor4& x, const Parameter& weight, const Parameter& bias) {
  const auto g = conv_geometry(x, weight, bias);
  Tensor4 y(x.n, g.out_channels, x.h, x.w);
  for (int i = 0; i < x.n; ++i) kernels::omp::conv2d_forward(g, x.sample(i), weight.value, bias.value, y.sample(i));
  return y;
}

Tensor4 conv2d_backward(const Tensor4& x, Parameter& weight, Parameter& bias, const Tensor4& grad_out,
                        bool need_input_grad) {
  const auto g = conv_geometry(x, weight, bias);
  if (grad_out.n != x.n || grad_out.c != g.out_channels || grad_out.h != x.h || grad_out.w != x.w)
    throw ShapeError("conv2d_backward: gradient shape mismatch");
  Tensor4 gx;
  if (need_input_grad) gx = Tensor4(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    kernels::omp::conv2d_backward(g, x.sample(i), weight.value, grad_out.sample(i),
                                  need_input_grad ? gx.sample(i) : std::span<double>{}, weight.grad, bias.grad);
  return gx;
}

Tensor4 relu_forward(const Tensor4& x) {
  Tensor4 y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
  if (!x.same_shape(grad_out)) throw ShapeError("relu_backward: gradient shape mismatch");
  Tensor4 g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x.data[i] > 0.0)) g.data[i] = 0.0;
  return g;
}

Tensor4 maxpool2_forward(const Tensor4& x, std::vector<std::size_t>& argmax) {
  const int oh = x.h / 2;
  const int ow = x.w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("maxpool2: input smaller than 2x2");
  Tensor4 y(x.n, x.c, oh, ow);
  argmax.assign(y.size(), 0);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          std::size_t best = x.index(i, ch, 2 * oy, 2 * ox);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t k = x.index(i, ch, 2 * oy + dy, 2 * ox + dx);
              if (x.data[k] > x.data[best]) best = k;
            }
          const std::size_t o = y.index(i, ch, oy, ox);
          y.data[o] = x.data[best];
          argmax[o] = best;
        }
  return y;
}

Tensor4 maxpool2_backward(const Tensor4& x_shape, const std::vector<std::size_t>& argmax, const Tensor4& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool2_backward: gradient shape mismatch");
  Tensor4 gx(x_shape.n, x_shape.c, x_shape.h, x_shape.w);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gx.data[argmax[o]] += grad_out.data[o];
  return gx;
}

Tensor4 linear_forward(const Tensor4& x, const Parameter& weight, const Parameter& bias) {
  const int in = static_cast<int>(x.sample_size());
  if (weight.shape.size() != 2 || weight.shape[0] != in)
    throw ShapeError("linear: input has " + std::to_string(in) + " features, weight expects " +
                     std::to_string(weight.shape.empty() ? 0 : weight.shape[0]));
  const int out = weight.shape[1];
  if (bias.size() != static_cast<std::size_t>(out)) throw ShapeError("linear: bias size mismatch");
  Tensor4 y(x.n, out, 1, 1);
  for (int i = 0; i < x.n; ++i) std::copy(bias.value.begin(), bias.value.end(), y.data.begin() + static_cast<std::ptrdiff_t>(i) * out);
  if (x.n > 0) kernels::omp::gemm_nn(x.n, out, in, x.data.data(), in, weight.value.data(), out, y.data.data(), out);
  return y;
}

Tensor4 linear_backward(const Tensor4& x, Parameter& weight, Parameter& bias, const Tensor4& grad_out) {
  const int in = static_cast<int>(x.sample_size());
  const int out = weight.shape[1];
  if (grad_out.n != x.n || grad_out.sample_size() != static_cast<std::size_t>(out))
    throw ShapeError("linear_backward: gradient shape mismatch");
  Tensor4 gx(x.n, x.c, x.h, x.w);
  if (x.n == 0) return gx;
  kernels::omp::gemm_tn(in, out, x.n, x.data.data(), in, grad_out.data.data(), out, weight.grad.data(), out);
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < out; ++j) bias.grad[j] += grad_out.data[static_cast<std::size_t>(i) * out + j];
  std::vector<double> wt(static_cast<std::size_t>(out) * in);
  for (int p = 0; p < in; ++p)
    for (int j = 0; j < out; ++j) wt[static_cast<std::size_t>(j) * in + p] = weight.value[static_cast<std::size_t>(p) * out + j];
  kernels::omp::gemm_nn(x.n, in, out, grad_out.data.data(), out, wt.data(), in, gx.data.data(), in);
  return gx;
}

Tensor4 dropout_forward(const Tensor4& x, double rate, bool train, std::uint64_t seed, std::vector<std::uint8_t>& keep) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) {
    keep.clear();
    return x;
  }
  std::mt19937_64 rng(seed);
  keep.resize(x.size());
  Tensor4 y = x;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    keep[i] = u >= rate ? 1 : 0;
    y.data[i] = keep[i] ? y.data[i] * scale : 0.0;
  }
  return y;
}

Tensor4 dropout_backward(const Tensor4& grad_out, double rate, bool train, const std::vector<std::uint8_t>& keep) {
  if (!train || rate == 0.0) return grad_out;
  if (keep.size() != grad_out.size()) throw ShapeError("dropout_backward: mask size mismatch");
  Tensor4 g = grad_out;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = keep[i] ? g.data[i] * scale : 0.0;
  return g;
}

Tensor4 upsample_bilinear_forward(const Tensor4& x, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0 || x.h == 0 || x.w == 0) throw ShapeError("upsample_bilinear: empty size");
  const auto ty = bilinear_taps(x.h, out_h);
  const auto tx = bilinear_taps(x.w, out_w);
  Tensor4 y(x.n, x.c, out_h, out_w);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const double* src = x.data.data() + x.index(i, ch, 0, 0);
      double* dst = y.data.data() + y.index(i, ch, 0, 0);
      for (int oy = 0; oy < out_h; ++oy) {
        const Tap a = ty[oy];
        const double* r0 = src + static_cast<std::size_t>(a.i0) * x.w;
        const double* r1 = src + static_cast<std::size_t>(a.i1) * x.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap b = tx[ox];
          const double top = (1.0 - b.t) * r0[b.i0] + b.t * r0[b.i1];
          const double bot = (1.0 - b.t) * r1[b.i0] + b.t * r1[b.i1];
          dst[static_cast<std::size_t>(oy) * out_w + ox] = (1.0 - a.t) * top + a.t * bot;
        }
      }
    }
  return y;
}

Tensor4 upsample_bilinear_backward(const Tensor4& x_shape, const Tensor4& grad_out) {
  if (grad_out.n != x_shape.n || grad_out.c != x_shape.c) throw ShapeError("upsample_bilinear_backward: shape mismatch");
  const auto ty = bilinear_taps(x_shape.h, grad_out.h);
  const auto tx = bilinear_taps(x_shape.w, grad_out.w);
  Tensor4 gx(x_shape.n, x_shape.c, x_shape.h, x_shape.w);
  for (int i = 0; i < gx.n; ++i)
    for (int ch = 0; ch < gx.c; ++ch) {
      double* dst = gx.data.data() + gx.index(i, ch, 0, 0);
      const double* src = grad_out.data.data() + grad_out.index(i, ch, 0, 0);
      for (int oy = 0; oy < grad_out.h; ++oy) {
        const Tap a = ty[oy];
        double* r0 = dst + static_cast<std::size_t>(a.i0) * gx.w;
        double* r1 = dst + static_cast<std::size_t>(a.i1) * gx.w;
        for (int ox = 0; ox < grad_out.w; ++ox) {
          const Tap b = tx[ox];
          const double g = src[static_cast<std::size_t>(oy) * grad_out.w + ox];
          r0[b.i0] += (1.0 - a.t) * (1.0 - b.t) * g;
          r0[b.i1] += (1.0 - a.t) * b.t * g;
          r1[b.i0] += a.t * (1.0 - b.t) * g;
          r1[b.i1] += a.t * b.t * g;
        }
      }
    }
  return gx;
}

RoiWindow roi_window(const RoiBox& box, double spatial_scale, int feat_h, int feat_w) {
  auto axis = [](double lo, double hi, int n, int& a, int& b) {
    a = std::clamp(static_cast<int>(std::floor(lo)), 0, n);
    b = std::clamp(static_cast<int>(std::ceil(hi)), 0, n);
    if (b > a) return false;
    a = std::clamp(static_cast<int>(std::floor(lo)), 0, n - 1);
    b = a + 1;
    return true;
  };
  RoiWindow win;
  const bool dr = axis(box.top() * spatial_scale, box.bottom() * spatial_scale, feat_h, win.row0, win.row1);
  const bool dc = axis(box.left() * spatial_scale, box.right() * spatial_scale, feat_w, win.col0, win.col1);
  win.degenerate = dr || dc;
  return win;
}

RoiPoolResult roi_pool_forward(const Tensor4& features, const std::vector<PooledRoi>& rois, int out_h, int out_w,
                               double spatial_scale) {
  if (out_h <= 0 || out_w <= 0) throw ParameterError("roi_pool: output grid must be positive");
  if (!(spatial_scale > 0.0)) throw ParameterError("roi_pool: spatial scale must be positive");
  RoiPoolResult res;
  res.output = Tensor4(static_cast<int>(rois.size()), features.c, out_h, out_w);
  res.argmax.assign(res.output.size(), 0);
  res.degenerate.assign(rois.size(), 0);
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const PooledRoi& roi = rois[r];
    if (roi.batch < 0 || roi.batch >= features.n) throw ShapeError("roi_pool: ROI batch index out of range");
    const RoiWindow win = roi_window(roi.box, spatial_scale, features.h, features.w);
    res.degenerate[r] = win.degenerate ? 1 : 0;
    const int hh = win.row1 - win.row0;
    const int ww = win.col1 - win.col0;
    for (int ch = 0; ch < features.c; ++ch)
      for (int i = 0; i < out_h; ++i) {
        const int y0 = win.row0 + (i * hh) / out_h;
        const int y1 = win.row0 + ((i + 1) * hh + out_h - 1) / out_h;
        for (int j = 0; j < out_w; ++j) {
          const int x0 = win.col0 + (j * ww) / out_w;
          const int x1 = win.col0 + ((j + 1) * ww + out_w - 1) / out_w;
          std::size_t best = features.index(roi.batch, ch, y0, x0);
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
              const std::size_t k = features.index(roi.batch, ch, y, x);
              if (features.data[k] > features.data[best]) best = k;
            }
          const std::size_t o = res.output.index(static_cast<int>(r), ch, i, j);
          res.output.data[o] = features.data[best];
          res.argmax[o] = best;
        }
      }
  }
  return res;
}

Tensor4 roi_pool_backward(const Tensor4& features_shape, const RoiPoolResult& pooled, const Tensor4& grad_out) {
  if (!grad_out.same_shape(pooled.output)) throw ShapeError("roi_pool_backward: gradient shape mismatch");
  Tensor4 g(features_shape.n, features_shape.c, features_shape.h, features_shape.w);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g.data[pooled.argmax[o]] += grad_out.data[o];
  return g;
}

LossResult softmax_cross_entropy(const Tensor4& logits, const std::vector<int>& labels, Reduction batch_reduction) {
  const std::size_t hw = logits.plane_size();
  if (labels.size() != static_cast<std::size_t>(logits.n) * hw)
    throw ShapeError("softmax_cross_entropy: label count does not match logits");
  LossResult res;
  res.grad = Tensor4(logits.n, logits.c, logits.h, logits.w);
  const double scale = batch_reduction == Reduction::Mean && logits.n > 0 ? 1.0 / logits.n : 1.0;
  std::vector<double> z(logits.c);
  for (int i = 0; i < logits.n; ++i)
    for (std::size_t p = 0; p < hw; ++p) {
      const int label = labels[i * hw + p];
      if (label < 0 || label >= logits.c) throw ParameterError("softmax_cross_entropy: label out of range");
      double zmax = -std::numeric_limits<double>::infinity();
      for (int ch = 0; ch < logits.c; ++ch) {
        z[ch] = logits.data[(static_cast<std::size_t>(i) * logits.c + ch) * hw + p];
        zmax = std::max(zmax, z[ch]);
      }
      double denom = 0.0;
      for (int ch = 0; ch < logits.c; ++ch) denom += std::exp(z[ch] - zmax);
      const double log_denom = std::log(denom) + zmax;
      res.loss += scale * (log_denom - z[label]);
      for (int ch = 0; ch < logits.c; ++ch) {
        const double prob = std::exp(z[ch] - log_denom);
        res.grad.data[(static_cast<std::size_t>(i) * logits.c + ch) * hw + p] = scale * (prob - (ch == label ? 1.0 : 0.0));
      }
    }
  return res;
}

Tensor4 softmax(const Tensor4& logits) {
  Tensor4 out(logits.n, logits.c, logits.h, logits.w);
  const std::size_t hw = logits.plane_size();
  for (int i = 0; i < logits.n; ++i)
    for (std::size_t p = 0; p < hw; ++p) {
      double zmax = -std::numeric_limits<double>::infinity();
      for (int ch = 0; ch < logits.c; ++ch) zmax = std::max(zmax, logits.data[(static_cast<std::size_t>(i) * logits.c + ch) * hw + p]);
      double denom = 0.0;
      for (int ch = 0; ch < logits.c; ++ch) denom += std::exp(logits.data[(static_cast<std::size_t>(i) * logits.c + ch) * hw + p] - zmax);
      for (int ch = 0; ch < logits.c; ++ch) {
        const std::size_t k = (static_cast<std::size_t>(i) * logits.c + ch) * hw + p;
        out.data[k] = std::exp(logits.data[k] - zmax) / denom;
      }
    }
  return out;
}

}  // namespace redlesion::nnet
