#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "redlesion/detector.hpp"
#include "redlesion/nnet/detnet.hpp"
#include "redlesion/nnet/layers.hpp"
#include "redlesion/nnet/segnet.hpp"
#include "redlesion/nnet/sequential.hpp"

namespace redlesion::oracle {

using namespace redlesion::nnet;

void GradCheckResult::merge(const GradCheckResult& o) {
  if (o.max_rel_error > max_rel_error) {
    max_rel_error = o.max_rel_error;
    worst_index = o.worst_index;
    worst_numeric = o.worst_numeric;
    worst_analytic = o.worst_analytic;
  }
  checked += o.checked;
  skipped += o.skipped;
}

GradCheckResult check_gradient(const std::function<double()>& loss, std::vector<double>& x,
                               const std::vector<double>& analytic, double eps, std::size_t max_coords, double floor) {
  GradCheckResult res;
  const std::size_t n = x.size();
  const std::size_t stride = (max_coords == 0 || n <= max_coords) ? 1 : (n + max_coords - 1) / max_coords;
  const double base = loss();
  auto side = [&](std::size_t i, double h) {
    const double keep = x[i];
    x[i] = keep + h;
    const double v = loss();
    x[i] = keep;
    return v;
  };
  for (std::size_t i = 0; i < n; i += stride) {
    // A kink anywhere in [-h, h] makes the forward and backward slopes
    // disagree, even when it sits so close to x that central differences at
    // h and h/2 agree with each other. Shrink the step a few decades before
    // giving up on the coordinate.
    double num = 0.0;
    bool smooth = false;
    for (double h = eps; h >= eps * 1e-3 && !smooth; h *= 0.1) {
      const double fwd = (side(i, h) - base) / h;
      const double bwd = (base - side(i, -h)) / h;
      num = 0.5 * (fwd + bwd);
      const double scale = std::max({std::abs(fwd), std::abs(bwd), floor});
      smooth = std::abs(fwd - bwd) <= 1e-4 * scale;
    }
    if (!smooth) {
      ++res.skipped;
      continue;
    }
    ++res.checked;
    const double ana = analytic[i];
    const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), floor});
    if (rel >= res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
      res.worst_numeric = num;
      res.worst_analytic = ana;
    }
  }
  return res;
}

namespace {

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(gen); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  Tensor4 tensor(int n, int c, int h, int w, double sd = 1.0) {
    Tensor4 t(n, c, h, w);
    for (double& v : t.data) v = normal(sd);
    return t;
  }
  Parameter param(std::string name, std::vector<int> shape, double sd) {
    Parameter p;
    p.name = std::move(name);
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    p.shape = std::move(shape);
    p.value.resize(count);
    for (double& v : p.value) v = normal(sd);
    p.grad.assign(count, 0.0);
    p.velocity.assign(count, 0.0);
    return p;
  }
};

// Loss = <R, y> for a fixed random R; its gradient w.r.t. y is R.
double project(const Tensor4& y, const Tensor4& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * r.data[i];
  return s;
}

void add(std::vector<GradCase>& out, std::string name, const GradCheckResult& r) { out.push_back({std::move(name), r}); }

void conv_cases(Rng& rng, std::vector<GradCase>& out, int kernel) {
  const std::string tag = "conv2d_k" + std::to_string(kernel);
  Tensor4 x = rng.tensor(2, 2, 5, 6);
  Parameter w = rng.param("w", {3, 2, kernel, kernel}, 0.5);
  Parameter b = rng.param("b", {3}, 0.5);
  const Tensor4 r = rng.tensor(2, 3, 5, 6);
  auto loss = [&] { return project(conv2d_forward(x, w, b), r); };
  const Tensor4 gx = conv2d_backward(x, w, b, r, true);
  add(out, tag + "/input", check_gradient(loss, x.data, gx.data));
  add(out, tag + "/weight", check_gradient(loss, w.value, w.grad));
  add(out, tag + "/bias", check_gradient(loss, b.value, b.grad));
}

void elementwise_cases(Rng& rng, std::vector<GradCase>& out) {
  {
    Tensor4 x = rng.tensor(2, 3, 4, 5);
    const Tensor4 r = rng.tensor(2, 3, 4, 5);
    const Tensor4 gx = relu_backward(x, r);
    add(out, "relu/input", check_gradient([&] { return project(relu_forward(x), r); }, x.data, gx.data));
  }
  {
    Tensor4 x = rng.tensor(2, 2, 5, 7);
    std::vector<std::size_t> arg;
    const Tensor4 y = maxpool2_forward(x, arg);
    const Tensor4 r = rng.tensor(y.n, y.c, y.h, y.w);
    const Tensor4 gx = maxpool2_backward(x, arg, r);
    auto loss = [&] {
      std::vector<std::size_t> a;
      return project(maxpool2_forward(x, a), r);
    };
    add(out, "maxpool2/input", check_gradient(loss, x.data, gx.data));
  }
  {
    Tensor4 x = rng.tensor(3, 2, 2, 3);
    Parameter w = rng.param("w", {12, 5}, 0.5);
    Parameter b = rng.param("b", {5}, 0.5);
    const Tensor4 r = rng.tensor(3, 5, 1, 1);
    auto loss = [&] { return project(linear_forward(x, w, b), r); };
    const Tensor4 gx = linear_backward(x, w, b, r);
    add(out, "linear/input", check_gradient(loss, x.data, gx.data));
    add(out, "linear/weight", check_gradient(loss, w.value, w.grad));
    add(out, "linear/bias", check_gradient(loss, b.value, b.grad));
  }
  {
    Tensor4 x = rng.tensor(2, 4, 3, 3);
    const std::uint64_t seed = static_cast<std::uint64_t>(rng.integer(1, 1 << 30));
    std::vector<std::uint8_t> keep;
    const Tensor4 y = dropout_forward(x, 0.5, true, seed, keep);
    const Tensor4 r = rng.tensor(y.n, y.c, y.h, y.w);
    const Tensor4 gx = dropout_backward(r, 0.5, true, keep);
    auto loss = [&] {
      std::vector<std::uint8_t> k;
      return project(dropout_forward(x, 0.5, true, seed, k), r);
    };
    add(out, "dropout/input", check_gradient(loss, x.data, gx.data));
  }
  {
    Tensor4 x = rng.tensor(2, 2, 3, 4);
    const Tensor4 r = rng.tensor(2, 2, 7, 9);
    const Tensor4 gx = upsample_bilinear_backward(x, r);
    add(out, "upsample/input",
        check_gradient([&] { return project(upsample_bilinear_forward(x, 7, 9), r); }, x.data, gx.data));
  }
  {
    Tensor4 f = rng.tensor(2, 2, 8, 9);
    std::vector<PooledRoi> rois;
    for (int k = 0; k < 5; ++k) {
      const double h = rng.uniform(2.0, 16.0);
      const double w = rng.uniform(2.0, 18.0);
      rois.push_back({k % 2, {rng.uniform(0.0, 16.0), rng.uniform(0.0, 18.0), h, w}});
    }
    const RoiPoolResult pooled = roi_pool_forward(f, rois, 3, 2, 0.5);
    const Tensor4 r = rng.tensor(pooled.output.n, pooled.output.c, pooled.output.h, pooled.output.w);
    const Tensor4 gf = roi_pool_backward(f, pooled, r);
    add(out, "roi_pool/features",
        check_gradient([&] { return project(roi_pool_forward(f, rois, 3, 2, 0.5).output, r); }, f.data, gf.data));
  }
  for (Reduction red : {Reduction::Sum, Reduction::Mean}) {
    Tensor4 z = rng.tensor(3, 2, 3, 4, 2.0);
    std::vector<int> labels(3 * 12);
    for (int& l : labels) l = rng.integer(0, 1);
    const LossResult lr = softmax_cross_entropy(z, labels, red);
    add(out, red == Reduction::Sum ? "softmax_xent_sum/logits" : "softmax_xent_mean/logits",
        check_gradient([&] { return softmax_cross_entropy(z, labels, red).loss; }, z.data, lr.grad.data));
  }
}

void sequential_case(Rng& rng, std::vector<GradCase>& out) {
  ParamSet ps;
  const Sequential net({LayerSpec::conv(2, 3), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::conv(3, 2, 1),
                        LayerSpec::relu(), LayerSpec::linear(2 * 3 * 3, 5), LayerSpec::dropout(0.3),
                        LayerSpec::linear(5, 3)},
                       ps, "seq");
  ps.initialize(static_cast<std::uint64_t>(rng.integer(1, 1 << 30)));
  // biases start at zero; give them values so ReLUs are not all on the same side
  for (Parameter& p : ps)
    if (p.fan_in == 0)
      for (double& v : p.value) v = rng.normal(0.3);
  Tensor4 x = rng.tensor(2, 2, 6, 7);
  const Tensor4 r = rng.tensor(2, 3, 1, 1);
  const std::uint64_t seed = 77;
  auto loss = [&] { return project(net.forward(ps, x, true, seed).output(), r); };
  const SequentialCache cache = net.forward(ps, x, true, seed);
  ps.zero_grad();
  const Tensor4 gx = net.backward(ps, cache, r, true);
  add(out, "sequential/input", check_gradient(loss, x.data, gx.data));
  for (Parameter& p : ps) add(out, "sequential/" + p.name, check_gradient(loss, p.value, p.grad));
}

void segnet_case(Rng& rng, std::vector<GradCase>& out) {
  SegNetSpec spec;
  spec.widths = {2, 3, 3, 2};
  SegmentationNet net(spec, static_cast<std::uint64_t>(rng.integer(1, 1 << 30)));
  for (Parameter& p : net.params())
    if (p.fan_in == 0)
      for (double& v : p.value) v = rng.normal(0.3);
  Tensor4 x = rng.tensor(2, 3, 16, 16);
  std::vector<int> labels(2 * 16 * 16);
  for (int& l : labels) l = rng.integer(0, 1);
  auto loss = [&] { return softmax_cross_entropy(net.forward(x).logits, labels, Reduction::Mean).loss; };
  const auto cache = net.forward(x);
  const LossResult lr = softmax_cross_entropy(cache.logits, labels, Reduction::Mean);
  net.params().zero_grad();
  const Tensor4 gx = net.backward(cache, lr.grad, true);
  add(out, "segnet/input", check_gradient(loss, x.data, gx.data, 1e-3, 60));
  for (Parameter& p : net.params()) add(out, "segnet/" + p.name, check_gradient(loss, p.value, p.grad, 1e-3, 40));
}

void detector_case(Rng& rng, std::vector<GradCase>& out) {
  DetNetSpec spec;
  spec.widths = {3, 4, 4, 3};
  spec.hidden = 6;
  spec.pool_size = 2;
  spec.dropout = 0.5;
  spec.cls_init_std = 0.3;
  spec.reg_init_std = 0.3;
  DetectorNet net(spec, static_cast<std::uint64_t>(rng.integer(1, 1 << 30)));
  for (Parameter& p : net.params())
    if (p.fan_in == 0)
      for (double& v : p.value) v = rng.normal(0.2);
  std::vector<Tensor4> images{rng.tensor(1, 3, 24, 32, 1.0), rng.tensor(1, 3, 32, 24, 1.0)};
  std::vector<std::vector<RoiBox>> rois(2);
  std::vector<LabeledRoi> labels;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) {
      const double h = rng.uniform(4.0, 16.0);
      const double w = rng.uniform(4.0, 16.0);
      const RoiBox b{rng.uniform(h / 2, images[i].h - h / 2), rng.uniform(w / 2, images[i].w - w / 2), h, w};
      rois[static_cast<std::size_t>(i)].push_back(b);
      LabeledRoi l;
      l.box = b;
      l.u = (i + k) % 2;
      // offsets spread across both smooth-L1 regimes
      for (double& v : l.v) v = rng.uniform(-1.5, 1.5);
      labels.push_back(l);
    }
  const std::uint64_t seed = 4242;
  auto loss = [&] {
    const auto c = net.forward(images, rois, true, seed);
    return detection_loss(c.logits(), c.offsets(), labels).loss;
  };
  const auto cache = net.forward(images, rois, true, seed);
  const BatchLoss bl = detection_loss(cache.logits(), cache.offsets(), labels);
  net.params().zero_grad();
  net.backward(cache, bl.grad_logits, bl.grad_offsets);
  for (Parameter& p : net.params()) add(out, "detector/" + p.name, check_gradient(loss, p.value, p.grad, 1e-3, 40));

  // the loss head alone, w.r.t. logits and offsets
  Tensor4 logits = cache.logits();
  Tensor4 offsets = cache.offsets();
  const BatchLoss head = detection_loss(logits, offsets, labels);
  add(out, "detection_loss/logits",
      check_gradient([&] { return detection_loss(logits, offsets, labels).loss; }, logits.data, head.grad_logits.data));
  add(out, "detection_loss/offsets",
      check_gradient([&] { return detection_loss(logits, offsets, labels).loss; }, offsets.data, head.grad_offsets.data));
}

}  // namespace

std::vector<GradCase> run_gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> out;
  conv_cases(rng, out, 3);
  conv_cases(rng, out, 1);
  elementwise_cases(rng, out);
  sequential_case(rng, out);
  segnet_case(rng, out);
  detector_case(rng, out);
  return out;
}

}  // namespace redlesion::oracle
