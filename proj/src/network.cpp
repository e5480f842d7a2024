// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/network.hpp"

#include <algorithm>
#include <cmath>

#include "ttfs/error.hpp"

namespace ttfs {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm: return "batch_norm";
    case LayerKind::MaxPool: return "max_pool";
    case LayerKind::MinPool: return "min_pool";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

const char* to_string(BnPosition position) {
  return position == BnPosition::BeforeRelu ? "before_relu" : "after_relu";
}

double BatchNormParams::kappa(std::size_t c) const {
  return gamma.at(c) / std::sqrt(var.at(c) + epsilon);
}

Layer Layer::dense(Tensor weights, Tensor bias, bool relu) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  l.has_relu = relu;
  return l;
}

Layer Layer::conv2d(Tensor weights, Tensor bias, ConvMeta meta, bool relu) {
  Layer l;
  l.kind = LayerKind::Conv2d;
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  l.conv = meta;
  l.has_relu = relu;
  return l;
}

Layer Layer::batch_norm(BatchNormParams params, BnPosition position) {
  Layer l;
  l.kind = LayerKind::BatchNorm;
  l.bn = std::move(params);
  l.bn_position = position;
  return l;
}

Layer Layer::max_pool(std::size_t window, std::size_t stride, std::size_t channels) {
  Layer l;
  l.kind = LayerKind::MaxPool;
  l.pool = PoolMeta{window, stride, std::vector<PoolMode>(channels, PoolMode::Max)};
  return l;
}

Layer Layer::min_pool(std::size_t window, std::size_t stride, std::size_t channels) {
  Layer l;
  l.kind = LayerKind::MinPool;
  l.pool = PoolMeta{window, stride, std::vector<PoolMode>(channels, PoolMode::Min)};
  return l;
}

Layer Layer::flatten() { return Layer{}; }

void normalize_pool_kind(Layer& layer) {
  if (!layer.is_pool()) return;
  const bool all_min = !layer.pool.modes.empty() &&
                       std::all_of(layer.pool.modes.begin(), layer.pool.modes.end(),
                                   [](PoolMode m) { return m == PoolMode::Min; });
  layer.kind = all_min ? LayerKind::MinPool : LayerKind::MaxPool;
}

namespace {

std::size_t sliding_extent(std::size_t in, std::size_t pad, std::size_t window,
                           std::size_t stride, std::size_t index, const char* what) {
  if (stride == 0) throw Error(ErrorKind::Invariant, "stride must be positive", index, what);
  if (window == 0) throw Error(ErrorKind::Invariant, "window must be positive", index, what);
  if (in + pad < window) {
    throw Error(ErrorKind::Shape, "window larger than padded input", index, what);
  }
  return (in + pad - window) / stride + 1;
}

}  // namespace

Shape layer_output_shape(const Layer& layer, const Shape& in, std::size_t index) {
  switch (layer.kind) {
    case LayerKind::Dense: {
      if (layer.weights.rank() != 2) {
        throw Error(ErrorKind::Invariant, "dense weights must be [out, in]", index, "weights");
      }
      if (in.size() != 1 || in[0] != layer.weights.dim(1)) {
        throw Error(ErrorKind::Shape,
                    "dense layer expects [" + std::to_string(layer.weights.dim(1)) +
                        "] but receives " + shape_to_string(in),
                    index);
      }
      return {layer.weights.dim(0)};
    }
    case LayerKind::Conv2d: {
      if (layer.weights.rank() != 4) {
        throw Error(ErrorKind::Invariant, "conv weights must be [out_ch, in_ch, kh, kw]",
                    index, "weights");
      }
      if (in.size() != 3 || in[0] != layer.weights.dim(1)) {
        throw Error(ErrorKind::Shape,
                    "conv2d layer expects " + std::to_string(layer.weights.dim(1)) +
                        " input channels but receives " + shape_to_string(in),
                    index);
      }
      const auto& m = layer.conv;
      if (m.kernel_h != layer.weights.dim(2) || m.kernel_w != layer.weights.dim(3)) {
        throw Error(ErrorKind::Invariant, "kernel size disagrees with weight tensor", index,
                    "conv_meta");
      }
      return {layer.weights.dim(0),
              sliding_extent(in[1], m.pad_top + m.pad_bottom, m.kernel_h, m.stride, index,
                             "conv_meta"),
              sliding_extent(in[2], m.pad_left + m.pad_right, m.kernel_w, m.stride, index,
                             "conv_meta")};
    }
    case LayerKind::BatchNorm: {
      if (in.empty() || in[0] != layer.bn.channels()) {
        throw Error(ErrorKind::Shape,
                    "batch norm over " + std::to_string(layer.bn.channels()) +
                        " channels receives " + shape_to_string(in),
                    index);
      }
      return in;
    }
    case LayerKind::MaxPool:
    case LayerKind::MinPool: {
      if (in.size() != 3 || in[0] != layer.pool.modes.size()) {
        throw Error(ErrorKind::Shape,
                    "pool layer with " + std::to_string(layer.pool.modes.size()) +
                        " channel modes receives " + shape_to_string(in),
                    index);
      }
      const auto& p = layer.pool;
      return {in[0], sliding_extent(in[1], 0, p.window, p.stride, index, "pool_meta"),
              sliding_extent(in[2], 0, p.window, p.stride, index, "pool_meta")};
    }
    case LayerKind::Flatten:
      return {shape_size(in)};
  }
  throw Error(ErrorKind::Invariant, "unknown layer kind", index);
}

std::vector<Shape> infer_shapes(const ReluNetwork& net) {
  std::vector<Shape> shapes;
  shapes.reserve(net.layers.size() + 1);
  shapes.push_back(net.input_shape);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    shapes.push_back(layer_output_shape(net.layers[k], shapes.back(), k));
  }
  return shapes;
}

namespace {

void check_layer_fields(const Layer& l, const Shape& out, std::size_t k) {
  const bool parameterized = l.is_parameterized();
  if (!parameterized && (!l.weights.empty() || !l.bias.empty())) {
    throw Error(ErrorKind::Invariant, "only dense/conv2d layers carry weights", k, "weights");
  }
  if (!parameterized && l.has_relu) {
    throw Error(ErrorKind::Invariant, "only dense/conv2d layers carry a ReLU flag", k,
                "has_relu");
  }
  if (l.kind != LayerKind::BatchNorm && l.bn.channels() != 0) {
    throw Error(ErrorKind::Invariant, "batch norm parameters on a non-BN layer", k, "bn_params");
  }
  if (!l.is_pool() && !l.pool.modes.empty()) {
    throw Error(ErrorKind::Invariant, "pool modes on a non-pool layer", k, "pool_meta");
  }
  if (l.kind != LayerKind::Conv2d && !(l.conv == ConvMeta{})) {
    throw Error(ErrorKind::Invariant, "conv metadata on a non-conv layer", k, "conv_meta");
  }
  if (parameterized) {
    if (!l.weights.all_finite() || !l.bias.all_finite()) {
      throw Error(ErrorKind::Numeric, "non-finite parameter", k, "weights");
    }
    const std::size_t out_ch = l.weights.dim(0);
    const bool channel_bias = l.bias.rank() == 1 && l.bias.dim(0) == out_ch;
    const bool positional_bias = l.kind == LayerKind::Conv2d && l.bias.shape() == out;
    if (!channel_bias && !positional_bias) {
      throw Error(ErrorKind::Invariant,
                  "bias shape " + shape_to_string(l.bias.shape()) +
                      " matches neither the output channels nor the output shape",
                  k, "bias");
    }
  }
  if (l.kind == LayerKind::BatchNorm) {
    const auto& bn = l.bn;
    const std::size_t c = bn.channels();
    if (c == 0 || bn.var.size() != c || bn.gamma.size() != c || bn.beta.size() != c) {
      throw Error(ErrorKind::Invariant, "batch norm parameter vectors differ in length", k,
                  "bn_params");
    }
    if (!std::isfinite(bn.epsilon) || bn.epsilon < 0.0) {
      throw Error(ErrorKind::Invariant, "epsilon must be finite and non-negative", k,
                  "epsilon");
    }
    for (std::size_t i = 0; i < c; ++i) {
      if (!std::isfinite(bn.mean[i]) || !std::isfinite(bn.var[i]) ||
          !std::isfinite(bn.gamma[i]) || !std::isfinite(bn.beta[i])) {
        throw Error(ErrorKind::Numeric, "non-finite batch norm parameter", k, "bn_params");
      }
      if (bn.var[i] < 0.0) {
        throw Error(ErrorKind::Invariant,
                    "sigma_sq of channel " + std::to_string(i) + " is negative", k,
                    "sigma_sq");
      }
      if (bn.var[i] + bn.epsilon <= 0.0) {
        throw Error(ErrorKind::Invariant, "sigma_sq + epsilon must be positive", k,
                    "sigma_sq");
      }
    }
  }
}

}  // namespace

void validate(const ReluNetwork& net) {
  if (net.input_shape.empty() ||
      std::any_of(net.input_shape.begin(), net.input_shape.end(),
                  [](std::size_t d) { return d == 0; })) {
    throw Error(ErrorKind::Invariant, "input shape must be non-empty and positive", std::nullopt,
                "input_shape");
  }
  if (!std::isfinite(net.range_low) || !std::isfinite(net.range_high) ||
      !(net.range_high > net.range_low)) {
    throw Error(ErrorKind::Invariant, "input range must satisfy p < q", std::nullopt,
                "input_range");
  }
  if (net.layers.empty()) {
    throw Error(ErrorKind::Invariant, "network has no layers", std::nullopt, "layers");
  }
  const auto shapes = infer_shapes(net);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    check_layer_fields(net.layers[k], shapes[k + 1], k);
  }
  const std::size_t last = net.layers.size() - 1;
  const Layer& readout = net.layers[last];
  if (readout.kind != LayerKind::Dense || readout.has_relu) {
    throw Error(ErrorKind::Invariant, "last layer must be a dense readout without ReLU", last,
                "readout");
  }
  for (std::size_t k = 0; k < last; ++k) {
    const Layer& l = net.layers[k];
    if (l.is_parameterized() && !l.has_relu) {
      throw Error(ErrorKind::Invariant, "hidden dense/conv2d layer without ReLU", k,
                  "has_relu");
    }
    if (l.kind == LayerKind::BatchNorm && l.bn_position == BnPosition::BeforeRelu) {
      if (k == 0 || !net.layers[k - 1].is_parameterized()) {
        throw Error(ErrorKind::Structure,
                    "batch norm before ReLU must follow a dense/conv2d layer", k,
                    "bn_position");
      }
    }
  }
}

std::size_t readout_index(const ReluNetwork& net) {
  if (net.layers.empty()) throw Error(ErrorKind::Invariant, "network has no layers");
  return net.layers.size() - 1;
}

std::vector<std::size_t> hidden_layer_indices(const ReluNetwork& net) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k + 1 < net.layers.size(); ++k) {
    if (net.layers[k].is_parameterized()) out.push_back(k);
  }
  return out;
}

}  // namespace ttfs
