// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ttfs/network.hpp"
#include "ttfs/preprocess.hpp"
#include "ttfs/tensor.hpp"

namespace ttfs {

enum class Variant { FixedAlpha, IdenticalWeights, PositiveSlope };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class SnnLayerKind { Neuron, Pool, Flatten, Readout };

/// One stage of the spiking network, aligned index-for-index with the
/// layers of the scaled ReLU network it was converted from.
///
/// Neuron layers integrate step currents J from spikes of the previous
/// stage plus a constant drive alpha from t_min_prev, and fire once when
/// crossing `threshold`, at the latest at t_max. Pool layers relay the
/// first (max) or last (min) spike of each window. The readout integrates
/// without firing from t_min_prev until t_max (both taken from the last
/// hidden layer, so t_min == t_max for the readout).
struct SnnLayer {
  SnnLayerKind kind = SnnLayerKind::Flatten;
  LayerKind geometry = LayerKind::Dense;  // Dense or Conv2d for Neuron/Readout
  ConvMeta conv;
  Tensor weights;    // J for neuron layers, copied readout weights for the readout
  Tensor threshold;  // per neuron
  Tensor alpha;      // per neuron
  double t_min_prev = 0.0;  // window start of the presynaptic layer
  double t_min = 0.0;
  double t_max = 1.0;
  PoolMeta pool;
  std::size_t pool_inputs = 0;  // Q
  double pool_theta = 1.0;
  double pool_k_max = 0.0;
  double pool_k_min = 0.0;
  Shape in_shape;
  Shape out_shape;

  friend bool operator==(const SnnLayer&, const SnnLayer&) = default;
};

struct SnnNetwork {
  Shape input_shape;
  std::vector<SnnLayer> layers;
  Variant variant = Variant::FixedAlpha;
  double zeta = 0.5;

  friend bool operator==(const SnnNetwork&, const SnnNetwork&) = default;
};

struct ConvertOptions {
  /// Margin used by the positive-slope variant: alpha(n) = max(1, margin - min_i N_i).
  double eps_margin = 0.1;
};

/// Computes spiking parameters for every layer of a calibrated scaled network.
/// Throws ErrorKind::Precondition naming the neuron when a hidden row sum is
/// not below one, or (positive-slope) when no slope can keep every
/// trajectory increasing.
SnnNetwork convert(const ScaledNetwork& scaled, Variant variant, const ConvertOptions& options = {});

/// Recovers the scaled ReLU weights J / (alpha + sum J) of neuron layer `layer`.
Tensor inverse_weights(const SnnNetwork& snn, std::size_t layer);

/// alpha_i + sum_j J_ij for every neuron of `layer`.
Tensor slope_after_arrivals(const SnnNetwork& snn, std::size_t layer);

/// Sum of negative J per neuron of `layer`.
Tensor negative_input_sums(const SnnNetwork& snn, std::size_t layer);

struct PoolUnitParams {
  double k = 0.0;
  double theta = 1.0;
};

/// Max units fire on their first input, min units on their last of `inputs`.
/// A min unit with a single input degenerates to a max unit.
PoolUnitParams convert_pooling(PoolMode mode, std::size_t inputs);

/// Threshold of the zero-slope neuron that fires exactly when the sloped one does.
double dynamical_threshold(const SnnNetwork& snn, std::size_t layer, std::size_t neuron,
                           double t);

/// Indices of neuron layers.
std::vector<std::size_t> neuron_layer_indices(const SnnNetwork& snn);

/// Checks structural and numeric invariants of a spiking network.
void validate(const SnnNetwork& snn);

}  // namespace ttfs
