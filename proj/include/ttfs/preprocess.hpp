// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ttfs/network.hpp"
#include "ttfs/tensor.hpp"

namespace ttfs {

/// Mapping hyperparameters. Row sums of hidden weights are kept in
/// [-b_low, 1 - delta]; the spiking window of layer n is (1 + zeta) X(n),
/// floored at b_floor for layers that never activate.
struct HyperParams {
  double delta = 0.01;
  double b_low = 10.0;
  double zeta = 0.5;
  double b_floor = 1e-6;
  /// Bound the sum of positive incoming weights (not just the total) by
  /// 1 - delta. Needed by the positive-slope mapping variant.
  bool bound_positive_sum = false;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Throws ErrorKind::Usage when a hyperparameter is outside its range.
void check_hyper(const HyperParams& hyper);

/// BN-free network on [0, 1] inputs, functionally identical to its source.
struct ScaledNetwork {
  ReluNetwork net;
  /// Input range of the source network; samples are mapped by (x - p) / (q - p).
  double source_low = 0.0;
  double source_high = 1.0;
  /// Indexed by layer; for hidden Dense layers one factor per neuron, for
  /// hidden Conv2d layers one per output channel, empty elsewhere. The scaled
  /// activation is factor * original activation.
  std::vector<std::vector<double>> scale_factors;
  /// Indexed by layer; calibration maximum X(n) for hidden layers, 0 elsewhere.
  std::vector<double> layer_max;
  bool calibrated = false;
  HyperParams hyper;

  friend bool operator==(const ScaledNetwork&, const ScaledNetwork&) = default;
};

// Batch norm fusion. `bn_index` addresses the BatchNorm layer to remove.

/// Folds a before-ReLU batch norm into the preceding Dense/Conv2d layer.
ReluNetwork fuse_bn_before_relu(const ReluNetwork& net, std::size_t bn_index);

/// Folds an after-ReLU batch norm into the next Dense/Conv2d layer, passing
/// through pool and flatten layers. Pool channels with negative scale switch
/// between max and min; zero padding yields per-location conv biases.
ReluNetwork fuse_bn_after_relu(const ReluNetwork& net, std::size_t bn_index);

/// Fuses every batch norm in order of appearance.
ReluNetwork fuse_all_batch_norms(const ReluNetwork& net);

/// Rewrites the network to accept (x - p) / (q - p) in place of x.
ReluNetwork normalize_input_range(const ReluNetwork& net);

struct RescaleResult {
  ReluNetwork net;
  std::vector<std::vector<double>> scale_factors;
};

/// Applies the ReLU scaling symmetry one hidden layer at a time so every
/// hidden row sum lies in [-b_low, 1 - delta]; the readout absorbs the
/// last factors, leaving logits unchanged. Expects a BN-free network.
RescaleResult rescale_weights(const ReluNetwork& net, double delta, double b_low,
                              bool bound_positive_sum = false);

/// Per-neuron incoming weight sum of a Dense/Conv2d layer (per channel for conv).
std::vector<double> row_sums(const Layer& layer);
/// Same, over positive weights only.
std::vector<double> positive_row_sums(const Layer& layer);

/// Maps scaled activations/outputs of hidden layer `layer` back to the
/// original network's values.
Tensor recover_original(const ScaledNetwork& scaled, std::size_t layer, const Tensor& values);

/// Maximum ReLU output per hidden layer over the samples (already in [0, 1]
/// input space). Entries for non-hidden layers are 0.
std::vector<double> calibrate(const ReluNetwork& scaled_net, std::span<const Tensor> inputs,
                              unsigned workers = 0);

/// (x - p) / (q - p) with the source range recorded in `scaled`.
Tensor normalize_sample(const ScaledNetwork& scaled, const Tensor& x);

/// Full phase one: input normalization, batch norm fusion, rescaling and
/// calibration on `calibration` (source-range samples).
ScaledNetwork preprocess(const ReluNetwork& net, std::span<const Tensor> calibration,
                         const HyperParams& hyper = {}, unsigned workers = 0);

}  // namespace ttfs
