// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ttfs/tensor.hpp"

namespace ttfs {

enum class LayerKind { Dense, Conv2d, BatchNorm, MaxPool, MinPool, Flatten };
enum class PoolMode : std::uint8_t { Max, Min };
enum class BnPosition { BeforeRelu, AfterRelu };

const char* to_string(LayerKind kind);
const char* to_string(BnPosition position);

struct ConvMeta {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad_top = 0;
  std::size_t pad_bottom = 0;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;

  bool padded() const { return pad_top + pad_bottom + pad_left + pad_right > 0; }
  friend bool operator==(const ConvMeta&, const ConvMeta&) = default;
};

/// Pooling over non-overlapping or strided square windows, no padding.
/// `modes` holds one entry per channel; max and min may be mixed.
struct PoolMeta {
  std::size_t window = 2;
  std::size_t stride = 2;
  std::vector<PoolMode> modes;

  friend bool operator==(const PoolMeta&, const PoolMeta&) = default;
};

struct BatchNormParams {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> gamma;
  std::vector<double> beta;
  double epsilon = 1e-5;

  std::size_t channels() const { return mean.size(); }
  /// gamma / sqrt(var + epsilon) for channel c.
  double kappa(std::size_t c) const;

  friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

/// One stage of a feed-forward ReLU network. Only the fields belonging to
/// `kind` are populated; use the named constructors.
///
/// Dense weights are [out, in], Conv2d weights [out_ch, in_ch, kh, kw].
/// Conv2d bias is either [out_ch] or per-location [out_ch, out_h, out_w];
/// the latter appears after folding affine maps through zero padding.
struct Layer {
  LayerKind kind = LayerKind::Flatten;
  Tensor weights;
  Tensor bias;
  bool has_relu = false;
  ConvMeta conv;
  PoolMeta pool;
  BatchNormParams bn;
  BnPosition bn_position = BnPosition::BeforeRelu;

  static Layer dense(Tensor weights, Tensor bias, bool relu);
  static Layer conv2d(Tensor weights, Tensor bias, ConvMeta meta, bool relu);
  static Layer batch_norm(BatchNormParams params, BnPosition position);
  static Layer max_pool(std::size_t window, std::size_t stride, std::size_t channels);
  static Layer min_pool(std::size_t window, std::size_t stride, std::size_t channels);
  static Layer flatten();

  bool is_parameterized() const {
    return kind == LayerKind::Dense || kind == LayerKind::Conv2d;
  }
  bool is_pool() const { return kind == LayerKind::MaxPool || kind == LayerKind::MinPool; }
  bool has_positional_bias() const { return kind == LayerKind::Conv2d && bias.rank() == 3; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Ordered layer list ending in a linear readout (Dense without ReLU).
struct ReluNetwork {
  Shape input_shape;
  double range_low = 0.0;
  double range_high = 1.0;
  std::vector<Layer> layers;

  friend bool operator==(const ReluNetwork&, const ReluNetwork&) = default;
};

/// Output shape of `layer` for input `in`; throws ErrorKind::Shape naming `index`.
Shape layer_output_shape(const Layer& layer, const Shape& in, std::size_t index);

/// shapes[0] is the input shape, shapes[k + 1] the output of layer k.
std::vector<Shape> infer_shapes(const ReluNetwork& net);

/// Checks every Layer and ReluNetwork invariant, throwing on the first violation.
void validate(const ReluNetwork& net);

/// Index of the readout layer (always the last one in a valid network).
std::size_t readout_index(const ReluNetwork& net);

/// Indices of hidden Dense/Conv2d layers, in order.
std::vector<std::size_t> hidden_layer_indices(const ReluNetwork& net);

/// Sets pool kind from its per-channel modes: MinPool iff every channel is min.
void normalize_pool_kind(Layer& layer);

}  // namespace ttfs
