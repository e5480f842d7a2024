// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "ttfs/error.hpp"
#include "ttfs/forward.hpp"

namespace ttfs {

const char* to_string(ZooModel m) {
  switch (m) {
    case ZooModel::Mlp: return "mlp";
    case ZooModel::LeNet: return "lenet";
    case ZooModel::Vgg: return "vgg";
  }
  return "unknown";
}

ZooModel zoo_model_from_string(const std::string& s) {
  for (ZooModel m : {ZooModel::Mlp, ZooModel::LeNet, ZooModel::Vgg}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorKind::Usage, "unknown model '" + s + "' (mlp, lenet, vgg)");
}

Dataset make_prototype_dataset(const PrototypeSpec& spec, std::size_t n,
                               std::uint64_t prototype_seed, std::uint64_t sample_seed) {
  if (spec.classes == 0 || !(spec.high > spec.low)) {
    throw Error(ErrorKind::Usage, "prototype data needs classes and a non-empty range");
  }
  const std::size_t size = shape_size(spec.shape);
  std::mt19937_64 proto_rng(prototype_seed);
  std::uniform_real_distribution<double> uniform(spec.low, spec.high);
  std::vector<std::vector<double>> prototypes(spec.classes, std::vector<double>(size));
  for (auto& p : prototypes) {
    for (double& v : p) v = uniform(proto_rng);
  }
  std::mt19937_64 rng(sample_seed);
  std::uniform_int_distribution<std::size_t> pick(0, spec.classes - 1);
  std::normal_distribution<double> noise(0.0, spec.noise * (spec.high - spec.low));
  Dataset d;
  d.input_shape = spec.shape;
  d.samples.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t label = pick(rng);
    std::vector<double> x(size);
    for (std::size_t i = 0; i < size; ++i) {
      x[i] = std::clamp(prototypes[label][i] + noise(rng), spec.low, spec.high);
    }
    d.samples.push_back({Tensor(spec.shape, std::move(x)), label});
  }
  return d;
}

namespace {

class Builder {
 public:
  Builder(Shape input, double low, double high, std::uint64_t seed, const Dataset* stats_data)
      : rng_(seed), stats_data_(stats_data) {
    net_.input_shape = input;
    net_.range_low = low;
    net_.range_high = high;
    shape_ = std::move(input);
  }

  Builder& dense(std::size_t out, bool relu = true) {
    const std::size_t in = shape_size(shape_);
    if (shape_.size() != 1) throw Error(ErrorKind::Shape, "dense layer needs a flat input");
    push(Layer::dense(gaussian({out, in}, std::sqrt(2.0 / static_cast<double>(in))),
                      gaussian({out}, 0.05), relu));
    return *this;
  }

  Builder& conv(std::size_t out_ch, std::size_t kernel, std::size_t pad) {
    const std::size_t in_ch = shape_.at(0);
    const double fan_in = static_cast<double>(in_ch * kernel * kernel);
    ConvMeta m;
    m.kernel_h = kernel;
    m.kernel_w = kernel;
    m.pad_top = m.pad_bottom = m.pad_left = m.pad_right = pad;
    push(Layer::conv2d(gaussian({out_ch, in_ch, kernel, kernel}, std::sqrt(2.0 / fan_in)),
                       gaussian({out_ch}, 0.05), m, true));
    return *this;
  }

  // Statistics come from the current network on the stats data, as a
  // trained batch norm would have recorded them.
  Builder& batch_norm(BnPosition position, int negative_channel = -1) {
    const std::size_t ch = shape_.at(0);
    const std::size_t per = shape_size(shape_) / ch;
    std::vector<double> sum(ch, 0.0);
    std::vector<double> sq(ch, 0.0);
    const std::size_t n = std::min<std::size_t>(stats_data_->samples.size(), 256);
    const std::size_t last = net_.layers.size() - 1;
    for (std::size_t s = 0; s < n; ++s) {
      const ForwardResult r = relu_forward(net_, stats_data_->samples[s].input);
      const Tensor& v = position == BnPosition::BeforeRelu ? r.activations[last] : r.outputs[last];
      for (std::size_t i = 0; i < v.size(); ++i) {
        sum[i / per] += v[i];
        sq[i / per] += v[i] * v[i];
      }
    }
    const double count = static_cast<double>(n * per);
    std::uniform_real_distribution<double> gamma(0.6, 1.4);
    std::uniform_real_distribution<double> beta(-0.1, 0.3);
    BatchNormParams bn;
    bn.epsilon = 1e-5;
    for (std::size_t c = 0; c < ch; ++c) {
      const double mean = sum[c] / count;
      bn.mean.push_back(mean);
      bn.var.push_back(std::max(sq[c] / count - mean * mean, 0.0));
      const double g = gamma(rng_);
      bn.gamma.push_back(static_cast<int>(c) == negative_channel ? -g : g);
      bn.beta.push_back(beta(rng_));
    }
    push(Layer::batch_norm(std::move(bn), position));
    return *this;
  }

  Builder& max_pool(std::size_t window) {
    push(Layer::max_pool(window, window, shape_.at(0)));
    return *this;
  }

  Builder& flatten() {
    push(Layer::flatten());
    return *this;
  }

  ReluNetwork finish() {
    validate(net_);
    return net_;
  }

 private:
  Tensor gaussian(Shape shape, double sd) {
    std::normal_distribution<double> d(0.0, sd);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = d(rng_);
    return t;
  }

  void push(Layer l) {
    shape_ = layer_output_shape(l, shape_, net_.layers.size());
    net_.layers.push_back(std::move(l));
  }

  ReluNetwork net_;
  Shape shape_;
  std::mt19937_64 rng_;
  const Dataset* stats_data_;
};

PrototypeSpec spec_for(ZooModel m) {
  switch (m) {
    case ZooModel::Mlp: return {{64}, -1.0, 1.0, 10, 0.3};
    case ZooModel::LeNet: return {{1, 28, 28}, 0.0, 1.0, 10, 0.3};
    case ZooModel::Vgg: return {{3, 16, 16}, -3.0, 3.0, 10, 0.3};
  }
  return {};
}

}  // namespace

ReluNetwork make_random_mlp(const std::vector<std::size_t>& sizes, double low, double high,
                            std::uint64_t seed) {
  if (sizes.size() < 2) throw Error(ErrorKind::Usage, "an MLP needs input and output sizes");
  Builder b({sizes.front()}, low, high, seed, nullptr);
  for (std::size_t i = 1; i + 1 < sizes.size(); ++i) b.dense(sizes[i]);
  b.dense(sizes.back(), false);
  return b.finish();
}

void fit_readout(ReluNetwork& net, const Dataset& train, double ridge) {
  validate(net);
  if (!train.labeled()) throw Error(ErrorKind::Data, "readout fitting needs labeled samples");
  const std::size_t last = readout_index(net);
  Layer& readout = net.layers[last];
  const std::size_t classes = readout.weights.dim(0);
  const std::size_t d = readout.weights.dim(1);
  const std::size_t n = train.samples.size();
  Eigen::MatrixXd f(n, d + 1);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes);
  for (std::size_t s = 0; s < n; ++s) {
    const ForwardResult r = relu_forward(net, train.samples[s].input);
    const Tensor& feat = last == 0 ? train.samples[s].input : r.outputs[last - 1];
    for (std::size_t j = 0; j < d; ++j) f(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = feat[j];
    f(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(d)) = 1.0;
    const std::size_t label = *train.samples[s].label;
    if (label >= classes) throw Error(ErrorKind::Data, "label exceeds the readout size");
    y(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(label)) = 1.0;
  }
  Eigen::MatrixXd gram = f.transpose() * f;
  gram.diagonal().array() += ridge;
  const Eigen::MatrixXd w = gram.ldlt().solve(f.transpose() * y);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      readout.weights[c * d + j] = w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
    }
    readout.bias[c] = w(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c));
  }
  validate(net);
}

ZooBundle make_zoo_model(ZooModel model, std::uint64_t seed, const ZooOptions& options) {
  const PrototypeSpec spec = spec_for(model);
  ZooBundle z;
  z.train = make_prototype_dataset(spec, options.n_train, seed, seed + 1);
  z.calibration = make_prototype_dataset(spec, options.n_calibration, seed, seed + 2);
  z.eval = make_prototype_dataset(spec, options.n_eval, seed, seed + 3);

  Builder b(spec.shape, spec.low, spec.high, seed + 4, &z.train);
  switch (model) {
    case ZooModel::Mlp:
      b.dense(48).dense(32).dense(24).dense(10, false);
      break;
    case ZooModel::LeNet:
      b.conv(6, 5, 0).batch_norm(BnPosition::BeforeRelu).max_pool(2);
      b.conv(16, 5, 0).batch_norm(BnPosition::BeforeRelu).max_pool(2);
      b.conv(120, 4, 0).flatten();
      b.dense(84).batch_norm(BnPosition::BeforeRelu);
      b.dense(10, false);
      break;
    case ZooModel::Vgg:
      b.conv(8, 3, 1).batch_norm(BnPosition::AfterRelu);
      b.conv(8, 3, 1).batch_norm(BnPosition::AfterRelu, 0).max_pool(2);
      b.conv(16, 3, 1).batch_norm(BnPosition::AfterRelu).max_pool(2);
      b.flatten().dense(32).batch_norm(BnPosition::AfterRelu);
      b.dense(10, false);
      break;
  }
  z.net = b.finish();
  fit_readout(z.net, z.train, options.ridge);
  return z;
}

}  // namespace ttfs
