#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "redlesion/error.hpp"
#include "redlesion/nnet/layers.hpp"
#include "redlesion/nnet/params.hpp"
#include "redlesion/nnet/sequential.hpp"

using namespace redlesion;
using namespace redlesion::nnet;

namespace {

Parameter make_param(std::vector<int> shape, double fill = 0.0) {
  Parameter p;
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  p.shape = std::move(shape);
  p.value.assign(n, fill);
  p.grad.assign(n, 0.0);
  p.velocity.assign(n, 0.0);
  return p;
}

Tensor4 random_tensor(std::mt19937_64& rng, int n, int c, int h, int w) {
  std::normal_distribution<double> g(0, 1);
  Tensor4 t(n, c, h, w);
  for (double& v : t.data) v = g(rng);
  return t;
}

}  // namespace

TEST(Conv, IdentityOneByOne) {
  std::mt19937_64 rng(1);
  const Tensor4 x = random_tensor(rng, 2, 3, 5, 4);
  Parameter w = make_param({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.value[static_cast<std::size_t>(c * 3 + c)] = 1.0;
  const Tensor4 y = conv2d_forward(x, w, make_param({3}));
  EXPECT_EQ(y.data, x.data);
}

TEST(Conv, ChannelMismatchRejected) {
  EXPECT_THROW(conv2d_forward(Tensor4(1, 2, 4, 4), make_param({3, 3, 3, 3}), make_param({3})), ShapeError);
}

TEST(Relu, NegativesBecomeZero) {
  Tensor4 x(1, 2, 3, 3, -0.5);
  x.data[4] = -1e-12;
  for (double v : relu_forward(x).data) EXPECT_EQ(v, 0.0);
}

TEST(Sequential, TwoLayerNetMatchesNestedLoops) {
  ParamSet params;
  const Sequential net({LayerSpec::conv(2, 3, 3), LayerSpec::relu(), LayerSpec::conv(3, 2, 3)}, params, "net");
  params.initialize(11);
  std::mt19937_64 rng(3);
  for (auto& p : params)
    for (double& v : p.value) v += 0.1 * std::normal_distribution<double>(0, 1)(rng);  // non-zero biases
  const Tensor4 x = random_tensor(rng, 1, 2, 6, 5);
  const Tensor4 y = net.forward(params, x, false, 0).output();

  auto conv = [](const Tensor4& in, const Parameter& w, const Parameter& b) {
    const int co_n = w.shape[0], ci_n = w.shape[1];
    Tensor4 out(1, co_n, in.h, in.w);
    for (int co = 0; co < co_n; ++co)
      for (int yy = 0; yy < in.h; ++yy)
        for (int xx = 0; xx < in.w; ++xx) {
          double acc = b.value[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < ci_n; ++ci)
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const int sy = yy + ky, sx = xx + kx;
                if (sy < 0 || sy >= in.h || sx < 0 || sx >= in.w) continue;
                acc += w.value[static_cast<std::size_t>(((co * ci_n + ci) * 3 + ky + 1) * 3 + kx + 1)] *
                       in.at(0, ci, sy, sx);
              }
          out.at(0, co, yy, xx) = acc;
        }
    return out;
  };
  Tensor4 h = conv(x, params[0], params[1]);
  for (double& v : h.data) v = std::max(v, 0.0);
  const Tensor4 ref = conv(h, params[2], params[3]);
  ASSERT_TRUE(ref.same_shape(y));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data[i], ref.data[i], 1e-6);
}

TEST(Sequential, ForwardDeterministicGivenSeed) {
  ParamSet params;
  const Sequential net({LayerSpec::linear(6, 8), LayerSpec::relu(), LayerSpec::dropout(0.5), LayerSpec::linear(8, 3)},
                       params, "mlp");
  params.initialize(2);
  std::mt19937_64 rng(4);
  const Tensor4 x = random_tensor(rng, 4, 6, 1, 1);
  EXPECT_EQ(net.forward(params, x, true, 77).output().data, net.forward(params, x, true, 77).output().data);
  EXPECT_NE(net.forward(params, x, true, 77).output().data, net.forward(params, x, true, 78).output().data);
}

TEST(Sequential, ZeroOutputGradGivesZeroGrads) {
  ParamSet params;
  const Sequential net({LayerSpec::conv(2, 3), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::linear(12, 4)},
                       params, "net");
  params.initialize(5);
  std::mt19937_64 rng(6);
  const Tensor4 x = random_tensor(rng, 2, 2, 4, 4);
  const SequentialCache cache = net.forward(params, x, true, 0);
  params.zero_grad();
  const Tensor4 gx = net.backward(params, cache, Tensor4(2, 4, 1, 1, 0.0));
  for (const auto& p : params)
    for (double g : p.grad) EXPECT_EQ(g, 0.0);
  for (double g : gx.data) EXPECT_EQ(g, 0.0);
}

TEST(Sequential, StaleCacheRejected) {
  ParamSet params;
  const Sequential net({LayerSpec::linear(3, 2)}, params, "lin");
  params.initialize(1);
  const SequentialCache cache = net.forward(params, Tensor4(1, 3, 1, 1, 1.0), true, 0);
  params.touch();
  EXPECT_THROW(net.backward(params, cache, Tensor4(1, 2, 1, 1, 1.0)), Error);
}

TEST(Linear, SumLossGradientIsInputSum) {
  std::mt19937_64 rng(7);
  const Tensor4 x = random_tensor(rng, 3, 5, 1, 1);
  Parameter w = make_param({5, 4}, 0.3), b = make_param({4});
  linear_backward(x, w, b, Tensor4(3, 4, 1, 1, 1.0));
  for (int o = 0; o < 4; ++o) {
    for (int i = 0; i < 5; ++i) {
      double s = 0;
      for (int n = 0; n < 3; ++n) s += x.at(n, i, 0, 0);
      EXPECT_NEAR(w.grad[static_cast<std::size_t>(i * 4 + o)], s, 1e-12);
    }
    EXPECT_NEAR(b.grad[static_cast<std::size_t>(o)], 3.0, 1e-12);
  }
}

TEST(RoiPool, QuadrantMaxima) {
  Tensor4 f(1, 1, 4, 4);
  for (int i = 0; i < 16; ++i) f.data[static_cast<std::size_t>(i)] = i + 1;
  const RoiPoolResult r = roi_pool_forward(f, {{0, RoiBox::from_edges(0, 0, 4, 4)}}, 2, 2, 1.0);
  EXPECT_EQ(r.output.data, (std::vector<double>{6, 8, 14, 16}));
  EXPECT_FALSE(r.degenerate[0]);
}

TEST(RoiPool, SingleCellReplicated) {
  Tensor4 f(1, 1, 4, 4);
  for (int i = 0; i < 16; ++i) f.data[static_cast<std::size_t>(i)] = i + 1;
  const RoiPoolResult r = roi_pool_forward(f, {{0, RoiBox::from_edges(2, 1, 3, 2)}}, 3, 3, 1.0);
  for (double v : r.output.data) EXPECT_EQ(v, 10.0);
}

TEST(RoiPool, ZeroAreaRoiIsClampedAndFlagged) {
  Tensor4 f(1, 1, 4, 4, 2.0);
  const RoiPoolResult r = roi_pool_forward(f, {{0, RoiBox{1.0, 1.0, 0.0, 0.0}}}, 2, 2, 1.0);
  EXPECT_TRUE(r.degenerate[0]);
  for (double v : r.output.data) EXPECT_EQ(v, 2.0);
}

TEST(RoiPool, MatchesBruteForceOnRandomRois) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 8);
  for (int t = 0; t < 50; ++t) {
    const Tensor4 f = random_tensor(rng, 2, 3, 8, 8);
    std::vector<PooledRoi> rois;
    for (int k = 0; k < 4; ++k) {
      double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
      if (a > b) std::swap(a, b);
      if (c > d) std::swap(c, d);
      rois.push_back({k % 2, RoiBox::from_edges(a, c, b + 0.5, d + 0.5)});
    }
    const RoiPoolResult r = roi_pool_forward(f, rois, 3, 3, 1.0);
    EXPECT_EQ(r.output.data, oracle::brute_roi_pool(f, rois, 3, 3, 1.0).data);
  }
}

TEST(RoiPool, BackwardRoutesToArgmaxAndConserves) {
  std::mt19937_64 rng(9);
  const Tensor4 f = random_tensor(rng, 1, 2, 10, 10);
  const std::vector<PooledRoi> rois{{0, RoiBox::from_edges(0, 0, 10, 10)}, {0, RoiBox::from_edges(2, 3, 7, 9)}};
  const RoiPoolResult r = roi_pool_forward(f, rois, 2, 3, 1.0);
  const Tensor4 g = random_tensor(rng, 2, 2, 2, 3);
  const Tensor4 gf = roi_pool_backward(f, r, g);
  double sum_in = 0, sum_out = 0;
  for (double v : g.data) sum_in += v;
  for (double v : gf.data) sum_out += v;
  EXPECT_NEAR(sum_in, sum_out, 1e-12);
  std::vector<bool> routed(f.size(), false);
  for (std::size_t k : r.argmax) routed[k] = true;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!routed[i]) {
      EXPECT_EQ(gf.data[i], 0.0);
    }
  }
}

TEST(Sgd, ZeroGradsLeaveParamsUnchanged) {
  ParamSet ps;
  ps.add("w", {3, 4}, 4);
  ps.initialize(3);
  const auto before = ps[0].value;
  ps.zero_grad();
  sgd_momentum_step(ps, 0.1, 0.9);
  EXPECT_EQ(ps[0].value, before);
}

TEST(Sgd, OneAndTwoStepsWithConstantGrad) {
  ParamSet ps;
  ps.add("w", {5}, 5);
  ps.initialize(4);
  const auto start = ps[0].value;
  const std::vector<double> g{1.0, -2.0, 0.5, 0.0, 3.0};
  const double lr = 0.01;
  ps[0].grad = g;
  sgd_momentum_step(ps, lr, 0.9);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(start[i] - ps[0].value[i], lr * g[i], 1e-15);
  ps[0].grad = g;
  sgd_momentum_step(ps, lr, 0.9);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(start[i] - ps[0].value[i], lr * g[i] * 2.9, 1e-14);
}

TEST(Sgd, NonFiniteGradientAborts) {
  ParamSet ps;
  ps.add("w", {2}, 2);
  ps.initialize(1);
  ps[0].grad = {0.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(sgd_momentum_step(ps, 0.1, 0.9), ModelError);
}

TEST(Dropout, FractionAndScaling) {
  const Tensor4 x(1, 100000, 1, 1, 1.0);
  std::vector<std::uint8_t> keep;
  const Tensor4 y = dropout_forward(x, 0.5, true, 42, keep);
  std::size_t zeros = 0;
  for (double v : y.data) {
    if (v == 0.0)
      ++zeros;
    else
      EXPECT_DOUBLE_EQ(v, 2.0);
  }
  EXPECT_NEAR(zeros / 1e5, 0.5, 0.02);
  const Tensor4 y3 = dropout_forward(x, 0.3, true, 43, keep);
  zeros = 0;
  for (double v : y3.data) zeros += v == 0.0;
  EXPECT_NEAR(zeros / 1e5, 0.3, 0.02);
}

TEST(Dropout, EvalModeIsIdentity) {
  std::mt19937_64 rng(5);
  const Tensor4 x = random_tensor(rng, 2, 50, 1, 1);
  std::vector<std::uint8_t> keep;
  EXPECT_EQ(dropout_forward(x, 0.5, false, 1, keep).data, x.data);
}

TEST(Softmax, CrossEntropyOfUniformLogits) {
  const LossResult r = softmax_cross_entropy(Tensor4(4, 2, 1, 1, 0.0), {0, 1, 1, 0}, Reduction::Mean);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
  const LossResult s = softmax_cross_entropy(Tensor4(4, 2, 1, 1, 0.0), {0, 1, 1, 0}, Reduction::Sum);
  EXPECT_NEAR(s.loss, 4 * std::log(2.0), 1e-12);
}

TEST(GradientCheck, EveryLayerAndComposedNets) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    oracle::GradCheckResult all;
    for (const auto& c : oracle::run_gradient_suite(seed)) {
      EXPECT_LT(c.result.max_rel_error, 1e-3) << c.name << " seed " << seed;
      EXPECT_GT(c.result.checked, 0u) << c.name;
      all.merge(c.result);
    }
    EXPECT_LT(all.skipped_fraction(), 0.05) << "seed " << seed;
  }
}
