#include "ucnet/nn.hpp"

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "ucnet/rng.hpp"

using namespace ucnet;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.v) v = scale * rng.normal();
  return t;
}

double weighted_sum(const Tensor<double>& t, const Tensor<double>& r) {
  double acc = 0.0;
  for (size_t i = 0; i < t.size(); ++i) acc += t.v[i] * r.v[i];
  return acc;
}

}  // namespace

TEST(Conv2d, IdentityOneByOne) {
  Rng rng(1);
  Tensor<float> x(2, 1, 5, 5);
  for (auto& v : x.v) v = float(rng.normal());
  ConvParams<float> p;
  p.weights = Tensor<float>(1, 1, 1, 1);
  p.weights.v[0] = 1.0f;
  const Tensor<float> y = conv2d(x, p);
  EXPECT_EQ(y.v, x.v);
}

TEST(Conv2d, AllOnesThreeByThree) {
  Tensor<float> x(1, 1, 3, 3);
  x.fill(1.0f);
  ConvParams<float> p;
  p.weights = Tensor<float>(1, 1, 3, 3);
  p.weights.fill(1.0f);
  const Tensor<float> y = conv2d(x, p);
  ASSERT_EQ(y.h, 1);
  ASSERT_EQ(y.w, 1);
  EXPECT_FLOAT_EQ(y.v[0], 9.0f);
}

TEST(Conv2d, MatchesNaiveOracleAcrossShapes) {
  Rng rng(2);
  struct Case {
    int n, c_in, c_out, h, w, k, stride, pad, groups;
    bool bias;
  };
  const Case cases[] = {
      {2, 3, 4, 8, 8, 3, 1, 1, 1, true},  {1, 4, 4, 9, 7, 3, 2, 1, 2, false},
      {2, 2, 2, 6, 6, 3, 1, 1, 2, false}, {1, 6, 9, 5, 5, 5, 1, 2, 3, true},
      {3, 1, 2, 8, 8, 1, 1, 0, 1, false}, {1, 8, 8, 8, 8, 3, 2, 1, 4, true},
  };
  for (const auto& cs : cases) {
    Tensor<double> x = random_tensor(cs.n, cs.c_in, cs.h, cs.w, rng);
    ConvParams<double> p;
    p.weights = random_tensor(cs.c_out, cs.c_in / cs.groups, cs.k, cs.k, rng);
    p.stride = cs.stride;
    p.pad = cs.pad;
    p.groups = cs.groups;
    if (cs.bias) {
      p.bias.resize(size_t(cs.c_out));
      for (auto& b : p.bias) b = rng.normal();
    }
    const Tensor<double> got = conv2d(x, p);
    const Tensor<double> want = testsupport::naive_conv2d(x, p);
    ASSERT_TRUE(got.same_shape(want));
    for (size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got.v[i], want.v[i], 1e-6);
  }
}

TEST(Conv2d, GroupsEqualIndependentConvolutions) {
  Rng rng(3);
  Tensor<double> x = random_tensor(2, 2, 6, 6, rng);
  ConvParams<double> p;
  p.weights = random_tensor(2, 1, 3, 3, rng);
  p.pad = 1;
  p.groups = 2;
  const Tensor<double> grouped = conv2d(x, p);
  for (int c = 0; c < 2; ++c) {
    Tensor<double> xc(2, 1, 6, 6);
    for (int n = 0; n < 2; ++n)
      std::copy(x.plane(n, c), x.plane(n, c) + 36, xc.plane(n, 0));
    ConvParams<double> pc;
    pc.weights = Tensor<double>(1, 1, 3, 3);
    std::copy(p.weights.plane(c, 0), p.weights.plane(c, 0) + 9, pc.weights.data());
    pc.pad = 1;
    const Tensor<double> single = conv2d(xc, pc);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 36; ++i)
        ASSERT_NEAR(grouped.plane(n, c)[i], single.plane(n, 0)[i], 1e-6);
  }
}

TEST(Conv2d, WorkerCountDoesNotChangeResults) {
  Rng rng(4);
  Tensor<float> x(4, 6, 10, 10);
  for (auto& v : x.v) v = float(rng.normal());
  ConvParams<float> p;
  p.weights = Tensor<float>(6, 3, 3, 3);
  for (auto& v : p.weights.v) v = float(0.1 * rng.normal());
  p.pad = 1;
  p.groups = 2;
  const Tensor<float> a = conv2d(x, p, 1);
  const Tensor<float> b = conv2d(x, p, 4);
  EXPECT_EQ(a.v, b.v);
  const ConvGrads<float> ga = conv2d_grad(x, p, a, 1);
  const ConvGrads<float> gb = conv2d_grad(x, p, a, 4);
  EXPECT_EQ(ga.x.v, gb.x.v);
  EXPECT_EQ(ga.weights.v, gb.weights.v);
}

TEST(Conv2d, RejectsBadShapes) {
  Tensor<float> x(1, 3, 8, 8);
  ConvParams<float> p;
  p.weights = Tensor<float>(4, 3, 3, 3);
  p.groups = 3;  // c_in 9 != 3, and groups doesn't divide c_out
  EXPECT_THROW(conv2d(x, p), Error);
  p.groups = 1;
  p.weights = Tensor<float>(4, 2, 3, 3);  // expects c_in 2
  EXPECT_THROW(conv2d(x, p), Error);
  p.weights = Tensor<float>(4, 3, 3, 3);
  p.stride = 3;
  EXPECT_THROW(conv2d(x, p), Error);
}

TEST(ConvGrad, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  Tensor<double> x = random_tensor(1, 2, 5, 5, rng);
  ConvParams<double> p;
  p.weights = random_tensor(2, 2, 3, 3, rng);
  p.pad = 1;
  p.bias.assign(2, 0.5);
  Tensor<double> gout(1, 2, 5, 5);
  const ConvGrads<double> g = conv2d_grad(x, p, gout);
  for (double v : g.x.v) EXPECT_EQ(v, 0.0);
  for (double v : g.weights.v) EXPECT_EQ(v, 0.0);
  for (double v : g.bias) EXPECT_EQ(v, 0.0);
}

TEST(ConvGrad, ScalarCaseIsProductRule) {
  Tensor<double> x(1, 1, 1, 1);
  x.v[0] = 3.0;
  ConvParams<double> p;
  p.weights = Tensor<double>(1, 1, 1, 1);
  p.weights.v[0] = -2.0;
  Tensor<double> gout(1, 1, 1, 1);
  gout.v[0] = 5.0;
  const ConvGrads<double> g = conv2d_grad(x, p, gout);
  EXPECT_DOUBLE_EQ(g.weights.v[0], 15.0);  // x * gout
  EXPECT_DOUBLE_EQ(g.x.v[0], -10.0);       // w * gout
}

TEST(ConvGrad, MatchesFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = random_tensor(2, 4, 8, 8, rng);
    ConvParams<double> p;
    p.weights = random_tensor(4, 2, 3, 3, rng, 0.5);
    p.pad = 1;
    p.stride = trial % 2 ? 2 : 1;
    p.groups = 2;
    p.bias.assign(4, 0.0);
    for (auto& b : p.bias) b = rng.normal();
    const int ho = (8 + 2 - 3) / p.stride + 1;
    Tensor<double> r = random_tensor(2, 4, ho, ho, rng);

    const ConvGrads<double> g = conv2d_grad(x, p, r);
    auto loss = [&]() { return weighted_sum(conv2d(x, p), r); };
    const double err = testsupport::fd_check(
        {p.weights.data(), p.bias.data(), x.data()},
        {p.weights.size(), p.bias.size(), x.size()},
        {g.weights.data(), g.bias.data(), g.x.data()}, loss);
    EXPECT_LT(err, 1e-5) << "trial " << trial;
  }
}

TEST(BatchNorm, TrainNormalizesPerChannel) {
  Rng rng(7);
  Tensor<double> x = random_tensor(4, 3, 6, 6, rng, 3.0);
  for (auto& v : x.v) v += 2.0;
  BnParams<double> p = make_bn<double>(3);
  const Tensor<double> y = batch_norm(x, p, Mode::Train);
  const int m = 4 * 36;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 36; ++i) {
        const double v = y.plane(n, c)[i];
        sum += v;
        sq += v * v;
      }
    EXPECT_NEAR(sum / m, 0.0, 1e-5);
    EXPECT_NEAR(sq / m, 1.0, 1e-3);  // epsilon shifts variance slightly below 1
  }
}

TEST(BatchNorm, EvalIdentityWithUnitStats) {
  Rng rng(8);
  Tensor<double> x = random_tensor(2, 3, 4, 4, rng);
  BnParams<double> p = make_bn<double>(3);
  const Tensor<double> y = batch_norm(x, p, Mode::Eval);
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.v[i], x.v[i], 1e-5);
}

TEST(BatchNorm, RunningStatsUpdateWithMomentum) {
  Rng rng(9);
  Tensor<double> x = random_tensor(2, 1, 4, 4, rng);
  for (auto& v : x.v) v = 2.0 * v + 10.0;
  BnParams<double> p = make_bn<double>(1);
  p.momentum = 0.75;
  batch_norm(x, p, Mode::Train);
  double mean = 0.0;
  for (double v : x.v) mean += v / double(x.size());
  double var = 0.0;
  for (double v : x.v) var += (v - mean) * (v - mean) / double(x.size());
  EXPECT_NEAR(p.running_mean[0], 0.75 * 0.0 + 0.25 * mean, 1e-9);
  EXPECT_NEAR(p.running_var[0], 0.75 * 1.0 + 0.25 * var, 1e-9);
}

TEST(BatchNorm, RejectsSingleElementTrain) {
  Tensor<double> x(1, 3, 1, 1);
  BnParams<double> p = make_bn<double>(3);
  EXPECT_THROW(batch_norm(x, p, Mode::Train), Error);
  EXPECT_NO_THROW(batch_norm(x, p, Mode::Eval));
}

TEST(BatchNorm, GradMatchesFiniteDifferences) {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = random_tensor(3, 2, 4, 4, rng, 2.0);
    Tensor<double> r = random_tensor(3, 2, 4, 4, rng);
    BnParams<double> p = make_bn<double>(2);
    for (auto& g : p.gamma) g = 1.0 + 0.3 * rng.normal();
    for (auto& b : p.beta) b = 0.3 * rng.normal();

    BnCache<double> cache;
    BnParams<double> work = p;
    batch_norm(x, work, Mode::Train, &cache);
    const BnGrads<double> g = batch_norm_grad(p, cache, r);

    auto loss = [&]() {
      BnParams<double> tmp = p;  // running-stat updates must not leak between calls
      return weighted_sum(batch_norm(x, tmp, Mode::Train), r);
    };
    const double err = testsupport::fd_check(
        {x.data(), p.gamma.data(), p.beta.data()}, {x.size(), p.gamma.size(), p.beta.size()},
        {g.x.data(), g.gamma.data(), g.beta.data()}, loss);
    EXPECT_LT(err, 1e-5) << "trial " << trial;
  }
}

TEST(Relu, ForwardAndGrad) {
  Tensor<double> x(1, 1, 1, 2);
  x.v = {-2.0, 2.0};
  const Tensor<double> y = relu(x);
  EXPECT_EQ(y.v[0], 0.0);
  EXPECT_EQ(y.v[1], 2.0);
  Tensor<double> gout(1, 1, 1, 2);
  gout.v = {3.0, 4.0};
  const Tensor<double> gx = relu_grad(x, gout);
  EXPECT_EQ(gx.v[0], 0.0);
  EXPECT_EQ(gx.v[1], 4.0);
}

TEST(Relu, GradMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = random_tensor(2, 3, 5, 5, rng);
    // Keep inputs away from the kink so central differences are valid.
    for (auto& v : x.v)
      if (std::fabs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    Tensor<double> r = random_tensor(2, 3, 5, 5, rng);
    const Tensor<double> g = relu_grad(x, r);
    auto loss = [&]() { return weighted_sum(relu(x), r); };
    const double err = testsupport::fd_check({x.data()}, {x.size()}, {g.v.data()}, loss);
    EXPECT_LT(err, 1e-5);
  }
}

TEST(GlobalAvgPool, MeanAndGrad) {
  Tensor<double> x(1, 1, 2, 2);
  x.v = {1.0, 3.0, 5.0, 7.0};
  const Tensor<double> y = global_avg_pool(x);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y.v[0], 4.0);

  Rng rng(12);
  Tensor<double> x2 = random_tensor(2, 3, 4, 5, rng);
  Tensor<double> r = random_tensor(2, 3, 1, 1, rng);
  const Tensor<double> g = global_avg_pool_grad(x2, r);
  auto loss = [&]() { return weighted_sum(global_avg_pool(x2), r); };
  const double err = testsupport::fd_check({x2.data()}, {x2.size()}, {g.v.data()}, loss);
  EXPECT_LT(err, 1e-5);
}

TEST(FullyConnected, ForwardAndGrad) {
  Rng rng(13);
  Tensor<double> x = random_tensor(3, 5, 1, 1, rng);
  Tensor<double> w = random_tensor(5, 2, 1, 1, rng);
  std::vector<double> b = {0.1, -0.2};
  Tensor<double> r = random_tensor(3, 2, 1, 1, rng);

  const Tensor<double> y = fully_connected(x, w, b);
  ASSERT_EQ(y.c, 2);
  double manual = 0.0;
  for (int c = 0; c < 5; ++c) manual += x.at(0, c, 0, 0) * w.at(c, 0, 0, 0);
  EXPECT_NEAR(y.at(0, 0, 0, 0), manual + 0.1, 1e-12);

  const FcGrads<double> g = fully_connected_grad(x, w, r);
  auto loss = [&]() { return weighted_sum(fully_connected(x, w, b), r); };
  const double err =
      testsupport::fd_check({x.data(), w.data(), b.data()}, {x.size(), w.size(), b.size()},
                            {g.x.data(), g.weights.data(), g.bias.data()}, loss);
  EXPECT_LT(err, 1e-5);
}

TEST(SoftmaxCrossEntropy, UniformAndStability) {
  Tensor<double> logits(1, 2, 1, 1);
  logits.v = {0.7, 0.7};
  const auto sm = softmax_cross_entropy(logits, {0});
  EXPECT_NEAR(sm.loss, std::log(2.0), 1e-12);

  Tensor<double> extreme(1, 2, 1, 1);
  extreme.v = {1000.0, -1000.0};
  const auto sm2 = softmax_cross_entropy(extreme, {0});
  EXPECT_TRUE(std::isfinite(sm2.loss));
  EXPECT_NEAR(sm2.loss, 0.0, 1e-12);
  const auto sm3 = softmax_cross_entropy(extreme, {1});
  EXPECT_TRUE(std::isfinite(sm3.loss));
  EXPECT_NEAR(sm3.loss, 2000.0, 1e-9);
}

TEST(SoftmaxCrossEntropy, RowsSumToOne) {
  Rng rng(14);
  Tensor<double> logits = random_tensor(8, 2, 1, 1, rng, 5.0);
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(int(rng.below(2)));
  const auto sm = softmax_cross_entropy(logits, labels);
  for (int n = 0; n < 8; ++n)
    EXPECT_NEAR(sm.probs[size_t(2 * n)] + sm.probs[size_t(2 * n + 1)], 1.0, 1e-6);
}

TEST(SoftmaxCrossEntropy, RejectsBadLabels) {
  Tensor<double> logits(2, 2, 1, 1);
  EXPECT_THROW(softmax_cross_entropy(logits, {0, 2}), Error);
  EXPECT_THROW(softmax_cross_entropy(logits, {-1, 0}), Error);
}

TEST(SoftmaxCrossEntropy, GradMatchesFiniteDifferences) {
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> logits = random_tensor(6, 2, 1, 1, rng, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) labels.push_back(int(rng.below(2)));
    const auto sm = softmax_cross_entropy(logits, labels);
    auto loss = [&]() { return double(softmax_cross_entropy(logits, labels).loss); };
    const double err = testsupport::fd_check({logits.data()}, {logits.size()},
                                             {sm.grad_logits.data()}, loss);
    EXPECT_LT(err, 1e-5);
  }
}
