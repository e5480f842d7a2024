// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "ttfs/error.hpp"
#include "ttfs/forward.hpp"
#include "ttfs/model_zoo.hpp"
#include "ttfs/preprocess.hpp"

using namespace ttfs;
using ttfs::testing::max_abs;
using ttfs::testing::max_abs_diff;
using ttfs::testing::random_tensor;

namespace {

ReluNetwork one_neuron(double w, double b) {
  ReluNetwork net;
  net.input_shape = {1};
  net.layers.push_back(Layer::dense(Tensor({1, 1}, {w}), Tensor({1}, {b}), true));
  net.layers.push_back(Layer::dense(Tensor({1, 1}, {1.0}), Tensor({1}, {0.0}), false));
  return net;
}

double rel_logit_error(const ReluNetwork& a, const ReluNetwork& b, const Tensor& x) {
  const Tensor la = relu_logits(a, x);
  const Tensor lb = relu_logits(b, x);
  return max_abs_diff(la.data(), lb.data()) / std::max(1.0, max_abs(la.data()));
}

// conv(relu) -> after-ReLU BN -> padded conv(relu) -> max pool -> flatten -> readout.
ReluNetwork padded_after_bn_net(std::mt19937_64& rng, double gamma0) {
  ReluNetwork net;
  net.input_shape = {2, 6, 6};
  net.layers.push_back(Layer::conv2d(random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5),
                                     random_tensor({3}, rng, -0.1, 0.3), {3, 3, 1, 1, 1, 1, 1},
                                     true));
  BatchNormParams p{{0.2, 0.4, 0.1}, {0.5, 1.5, 0.8}, {gamma0, 0.7, 1.3}, {0.3, -0.2, 0.1}, 1e-5};
  net.layers.push_back(Layer::batch_norm(p, BnPosition::AfterRelu));
  net.layers.push_back(Layer::max_pool(2, 2, 3));
  net.layers.push_back(Layer::conv2d(random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5),
                                     random_tensor({4}, rng, -0.1, 0.3), {3, 3, 1, 1, 1, 1, 1},
                                     true));
  net.layers.push_back(Layer::flatten());
  net.layers.push_back(Layer::dense(random_tensor({5, 36}, rng, -0.5, 0.5),
                                    random_tensor({5}, rng, -0.1, 0.1), false));
  validate(net);
  return net;
}

}  // namespace

TEST(HyperParams, RangeChecks) {
  EXPECT_NO_THROW(check_hyper({}));
  for (HyperParams h : {HyperParams{1.5}, HyperParams{0.0}, HyperParams{0.1, -1.0},
                        HyperParams{0.1, 10.0, -1.0}, HyperParams{0.1, 10.0, 0.5, 0.0}}) {
    try {
      check_hyper(h);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Usage);
    }
  }
}

TEST(BatchNormFusion, UnitScaleExample) {
  ReluNetwork net = one_neuron(2.0, 1.0);
  BatchNormParams p{{1.0}, {0.25}, {0.5}, {0.1}, 0.0};
  net.layers.insert(net.layers.begin() + 1, Layer::batch_norm(p, BnPosition::BeforeRelu));
  const ReluNetwork fused = fuse_bn_before_relu(net, 1);
  ASSERT_EQ(fused.layers.size(), 2u);
  EXPECT_DOUBLE_EQ(fused.layers[0].weights[0], 2.0);
  EXPECT_NEAR(fused.layers[0].bias[0], 0.1, 1e-15);
}

TEST(BatchNormFusion, IdentityLeavesWeights) {
  ReluNetwork net = one_neuron(-0.7, 0.3);
  BatchNormParams p{{0.0}, {1.0}, {1.0}, {0.0}, 0.0};
  net.layers.insert(net.layers.begin() + 1, Layer::batch_norm(p, BnPosition::BeforeRelu));
  const ReluNetwork fused = fuse_bn_before_relu(net, 1);
  EXPECT_EQ(fused, one_neuron(-0.7, 0.3));

  ReluNetwork after = one_neuron(-0.7, 0.3);
  after.layers.insert(after.layers.begin() + 1, Layer::batch_norm(p, BnPosition::AfterRelu));
  EXPECT_EQ(fuse_bn_after_relu(after, 1), one_neuron(-0.7, 0.3));
}

TEST(BatchNormFusion, BeforeReluPreservesLeNet) {
  const ZooBundle b = make_zoo_model(ZooModel::LeNet, 9, {200, 10, 100, 1.0});
  const ReluNetwork fused = fuse_all_batch_norms(b.net);
  for (const Layer& l : fused.layers) EXPECT_NE(l.kind, LayerKind::BatchNorm);
  for (const Sample& s : b.eval.samples) EXPECT_LE(rel_logit_error(b.net, fused, s.input), 1e-10);
}

TEST(BatchNormFusion, AfterReluPreservesVgg) {
  const ZooBundle b = make_zoo_model(ZooModel::Vgg, 9, {200, 10, 100, 1.0});
  const ReluNetwork fused = fuse_all_batch_norms(b.net);
  for (const Sample& s : b.eval.samples) EXPECT_LE(rel_logit_error(b.net, fused, s.input), 1e-10);
}

TEST(BatchNormFusion, NegativeScaleTurnsPoolChannelToMin) {
  std::mt19937_64 rng(21);
  const ReluNetwork net = padded_after_bn_net(rng, -0.9);
  const ReluNetwork fused = fuse_bn_after_relu(net, 1);
  const Layer& pool = fused.layers[1];
  ASSERT_TRUE(pool.is_pool());
  EXPECT_EQ(pool.pool.modes[0], PoolMode::Min);
  EXPECT_EQ(pool.pool.modes[1], PoolMode::Max);
  EXPECT_EQ(pool.pool.modes[2], PoolMode::Max);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = random_tensor(net.input_shape, rng, 0, 1);
    EXPECT_LE(rel_logit_error(net, fused, x), 1e-10);
  }
}

TEST(BatchNormFusion, ZeroPaddingGivesPositionalBias) {
  std::mt19937_64 rng(22);
  const ReluNetwork net = padded_after_bn_net(rng, 0.9);
  const ReluNetwork fused = fuse_bn_after_relu(net, 1);
  const Layer& conv = fused.layers[2];
  ASSERT_TRUE(conv.has_positional_bias());

  // Interior taps see the BN shift from all 9 positions, the corner from 4.
  const Layer& orig = net.layers[3];
  const BatchNormParams& bn = net.layers[1].bn;
  for (std::size_t k = 0; k < 4; ++k) {
    double excluded = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double shift = bn.beta[c] - bn.kappa(c) * bn.mean[c];
      for (std::size_t dy = 0; dy < 3; ++dy)
        for (std::size_t dx = 0; dx < 3; ++dx)
          if (dy == 0 || dx == 0) excluded += shift * orig.weights.at({k, c, dy, dx});
    }
    EXPECT_NEAR(conv.bias.at({k, 1, 1}) - conv.bias.at({k, 0, 0}), excluded, 1e-12);
  }
  for (int i = 0; i < 50; ++i) {
    const Tensor x = random_tensor(net.input_shape, rng, 0, 1);
    EXPECT_LE(rel_logit_error(net, fused, x), 1e-10);
  }
}

TEST(InputNormalization, UnitRangeIsNoOp) {
  const ReluNetwork net = make_random_mlp({5, 4, 3}, 0.0, 1.0, 3);
  EXPECT_EQ(normalize_input_range(net), net);
}

TEST(InputNormalization, SymmetricRangeExample) {
  const ReluNetwork net = make_random_mlp({3, 2, 2}, -3.0, 3.0, 3);
  const ReluNetwork n = normalize_input_range(net);
  EXPECT_EQ(n.range_low, 0.0);
  EXPECT_EQ(n.range_high, 1.0);
  const Layer& a = net.layers[0];
  const Layer& b = n.layers[0];
  for (std::size_t i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(b.weights.at({i, j}), 6.0 * a.weights.at({i, j}), 1e-15);
      sum += a.weights.at({i, j});
    }
    EXPECT_NEAR(b.bias[i], a.bias[i] - 3.0 * sum, 1e-14);
  }
  EXPECT_EQ(n.layers[1], net.layers[1]);
}

TEST(InputNormalization, WideRangeEquivalence) {
  const ReluNetwork net = make_random_mlp({8, 6, 4}, -200.0, 200.0, 8);
  const ReluNetwork n = normalize_input_range(net);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const Tensor x = random_tensor({8}, rng, -200, 200);
    Tensor u = x;
    for (double& v : u.data()) v = (v + 200.0) / 400.0;
    const Tensor la = relu_logits(net, x);
    EXPECT_LE(max_abs_diff(la.data(), relu_logits(n, u).data()),
              1e-8 * std::max(1.0, max_abs(la.data())));
  }
}

TEST(InputNormalization, PaddedFirstConv) {
  const ZooBundle b = make_zoo_model(ZooModel::Vgg, 5, {100, 5, 50, 1.0});
  const ReluNetwork n = normalize_input_range(fuse_all_batch_norms(b.net));
  for (const Sample& s : b.eval.samples) {
    Tensor u = s.input;
    for (double& v : u.data()) v = (v + 3.0) / 6.0;
    const Tensor la = relu_logits(b.net, s.input);
    EXPECT_LE(max_abs_diff(la.data(), relu_logits(n, u).data()),
              1e-10 * std::max(1.0, max_abs(la.data())));
  }
}

TEST(InputNormalization, DegenerateRangeIsRejected) {
  ReluNetwork net = make_random_mlp({3, 2}, 0.0, 1.0, 1);
  net.range_high = net.range_low;
  EXPECT_THROW(normalize_input_range(net), Error);
}

TEST(Rescale, InRangeNetworkIsUnchanged) {
  ReluNetwork net;
  net.input_shape = {2};
  net.layers.push_back(Layer::dense(Tensor({2, 2}, {0.2, 0.3, -0.4, 0.1}), Tensor({2}, 0.1), true));
  net.layers.push_back(Layer::dense(Tensor({1, 2}, {1.0, 2.0}), Tensor({1}, 0.0), false));
  const RescaleResult r = rescale_weights(net, 0.01, 10.0);
  EXPECT_EQ(r.net, net);
  EXPECT_EQ(r.scale_factors[0], (std::vector<double>{1.0, 1.0}));
}

TEST(Rescale, OversizedRowExample) {
  ReluNetwork net;
  net.input_shape = {2};
  net.layers.push_back(Layer::dense(Tensor({1, 2}, {1.0, 1.0}), Tensor({1}, 0.5), true));
  net.layers.push_back(Layer::dense(Tensor({1, 1}, {3.0}), Tensor({1}, 0.2), false));
  const RescaleResult r = rescale_weights(net, 0.1, 10.0);
  EXPECT_NEAR(r.net.layers[0].weights[0], 0.45, 1e-12);
  EXPECT_NEAR(r.net.layers[0].bias[0], 0.225, 1e-12);
  EXPECT_NEAR(r.net.layers[1].weights[0], 3.0 * 2.0 / 0.9, 1e-11);
  EXPECT_EQ(r.net.layers[1].bias[0], 0.2);
  EXPECT_LE(row_sums(r.net.layers[0])[0], 0.9);
}

TEST(Rescale, NegativeRowIsShrunkToLowerBound) {
  ReluNetwork net;
  net.input_shape = {3};
  net.layers.push_back(Layer::dense(Tensor({1, 3}, {-10.0, -8.0, 2.0}), Tensor({1}, 1.0), true));
  net.layers.push_back(Layer::dense(Tensor({1, 1}, {1.0}), Tensor({1}, 0.0), false));
  const RescaleResult r = rescale_weights(net, 0.01, 4.0);
  const double s = row_sums(r.net.layers[0])[0];
  EXPECT_GE(s, -4.0);
  EXPECT_NEAR(s, -4.0, 1e-12);
}

TEST(Rescale, RandomNetworksKeepLogitsAndBounds) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ReluNetwork net = make_random_mlp({12, 10, 8, 6}, 0.0, 1.0, seed);
    for (Layer& l : net.layers)
      for (double& w : l.weights.data()) w *= 3.0;
    for (bool positive : {false, true}) {
      const RescaleResult r = rescale_weights(net, 0.05, 2.0, positive);
      for (std::size_t k : hidden_layer_indices(r.net)) {
        for (double s : row_sums(r.net.layers[k])) {
          EXPECT_LE(s, 0.95);
          EXPECT_GE(s, -2.0);
        }
        if (positive) {
          for (double s : positive_row_sums(r.net.layers[k])) EXPECT_LE(s, 0.95);
        }
      }
      std::mt19937_64 rng(seed);
      for (int i = 0; i < 20; ++i) {
        const Tensor x = random_tensor({12}, rng, 0, 1);
        EXPECT_LE(rel_logit_error(net, r.net, x), 1e-9);
      }
    }
  }
}

TEST(Rescale, RecoverOriginalActivations) {
  const ZooBundle b = make_zoo_model(ZooModel::Mlp, 6, {100, 50, 20, 1.0});
  const ScaledNetwork s = preprocess(b.net, b.calibration.inputs(), {}, 1);
  for (const Sample& smp : b.eval.samples) {
    const ForwardResult orig = relu_forward(b.net, smp.input);
    const ForwardResult sc = relu_forward(s.net, normalize_sample(s, smp.input));
    for (std::size_t k : hidden_layer_indices(s.net)) {
      const Tensor back = recover_original(s, k, sc.outputs[k]);
      EXPECT_LE(max_abs_diff(back.data(), orig.outputs[k].data()),
                1e-12 * std::max(1.0, max_abs(orig.outputs[k].data())));
      for (std::size_t i = 0; i < back.size(); ++i)
        EXPECT_EQ(sc.outputs[k][i] > 0.0, orig.outputs[k][i] > 0.0);
    }
  }
}

TEST(Calibration, ZeroInputsWithNegativeBiases) {
  ReluNetwork net = make_random_mlp({6, 5, 4, 3}, 0.0, 1.0, 2);
  for (std::size_t k : hidden_layer_indices(net))
    for (double& b : net.layers[k].bias.data()) b = -std::abs(b) - 0.01;
  const std::vector<Tensor> zeros(10, Tensor({6}, 0.0));
  for (double m : calibrate(net, zeros, 1)) EXPECT_EQ(m, 0.0);
}

TEST(Calibration, MatchesBruteForceMaximum) {
  const ZooBundle b = make_zoo_model(ZooModel::LeNet, 2, {100, 300, 5, 1.0});
  const ReluNetwork net = fuse_all_batch_norms(b.net);
  const auto inputs = b.calibration.inputs();
  const auto got = calibrate(net, inputs, 2);
  std::vector<double> want(net.layers.size(), 0.0);
  for (const Tensor& x : inputs) {
    const auto logits = relu_forward(net, x);
    for (std::size_t k : hidden_layer_indices(net))
      for (double v : logits.outputs[k].data()) want[k] = std::max(want[k], v);
  }
  EXPECT_EQ(got, want);
  const auto single = calibrate(net, std::span(inputs).first(1), 1);
  for (std::size_t k : hidden_layer_indices(net)) EXPECT_LE(single[k], got[k]);
}

TEST(Calibration, EmptySetIsDataError) {
  const ReluNetwork net = make_random_mlp({3, 2}, 0, 1, 1);
  try {
    calibrate(net, {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
}

TEST(Preprocess, EndToEndIsLossless) {
  for (ZooModel m : {ZooModel::Mlp, ZooModel::LeNet, ZooModel::Vgg}) {
    const ZooBundle b = make_zoo_model(m, 12, {200, 100, 50, 1.0});
    const ScaledNetwork s = preprocess(b.net, b.calibration.inputs(), {}, 1);
    EXPECT_TRUE(s.calibrated);
    for (const Layer& l : s.net.layers) EXPECT_NE(l.kind, LayerKind::BatchNorm);
    for (const Sample& smp : b.eval.samples) {
      const Tensor la = relu_logits(b.net, smp.input);
      const Tensor lb = relu_logits(s.net, normalize_sample(s, smp.input));
      EXPECT_LE(max_abs_diff(la.data(), lb.data()), 1e-8 * std::max(1.0, max_abs(la.data())))
          << to_string(m);
    }
  }
}
