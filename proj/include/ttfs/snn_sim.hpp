// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttfs/convert.hpp"
#include "ttfs/tensor.hpp"

namespace ttfs {

/// Strict: the threshold is unreachable before the layer's window opens
/// (t_min), so no neuron fires while its inputs may still arrive.
/// Constant: the threshold is the same constant from t_min_prev onward.
enum class ThresholdMode { Strict, Constant };

/// Drive: the slope alpha is integrated into the potential.
/// DynamicThreshold: zero-slope potential against the threshold
/// theta - alpha (t - t_min_prev).
enum class Realization { Drive, DynamicThreshold };

const char* to_string(ThresholdMode mode);
ThresholdMode threshold_mode_from_string(const std::string& s);

struct NoiseSpec {
  /// Gaussian jitter added to every emitted spike of inputs and hidden neurons.
  double jitter_sd = 0.0;
  /// Gaussian offset added to each hidden neuron's slope, frozen for a given seed.
  double alpha_sd = 0.0;
  std::uint64_t seed = 0;
};

struct SimOptions {
  ThresholdMode mode = ThresholdMode::Strict;
  Realization realization = Realization::Drive;
  /// Neurons that would only fire through the t_max pulse stay silent;
  /// their effect on the next layer is applied at t_max in one step.
  bool sparse = false;
  NoiseSpec noise;
  /// Mixed into the jitter seed so each sample draws its own noise.
  std::uint64_t sample_key = 0;
};

struct LayerTrace {
  /// Per unit: threshold crossing or forced time (after jitter, if any).
  std::vector<double> times;
  /// Fired through the t_max pulse rather than a threshold crossing.
  std::vector<std::uint8_t> forced;
  /// Spike actually sent downstream (always 1 in dense mode).
  std::vector<std::uint8_t> emitted;
};

struct SpikeTrace {
  std::vector<double> input_times;
  /// Aligned with SnnNetwork::layers; the readout entry is empty.
  std::vector<LayerTrace> layers;
  /// Readout potentials at the end of the last window.
  Tensor potentials;
  std::size_t hidden_neurons = 0;
  /// Hidden integrate-and-fire neurons that crossed threshold by t_max.
  std::size_t natural_spikes = 0;
  /// Spikes sent by hidden integrate-and-fire neurons.
  std::size_t emitted_spikes = 0;
  /// Threshold crossings before t_min (constant mode), or neurons already
  /// above threshold when the window opens (strict mode).
  std::size_t early_crossings = 0;
  /// Neurons whose slope after all arrivals is not positive (slope noise).
  std::size_t invalid_neurons = 0;
};

/// t = 1 - x. Values within 1e-12 outside [0, 1] are clamped; x = 1 maps
/// to 1 - 1e-12. Throws ErrorKind::Data for anything further out.
std::vector<double> encode_input(const Tensor& x);

SpikeTrace simulate_event(const SnnNetwork& snn, const Tensor& input, const SimOptions& options = {});

/// Forward Euler on the grid t_k = k dt with H(0) = 0. A neuron fires at the
/// first grid time with V >= theta (not before t_min in strict mode) and is
/// forced at exactly t_max otherwise. Noise-free, dense mode only.
SpikeTrace simulate_stepped(const SnnNetwork& snn, const Tensor& input, double dt,
                            ThresholdMode mode = ThresholdMode::Strict);

/// x̄ = t_max - t per unit of `layer`; forced units decode to 0.
Tensor decode(const SpikeTrace& trace, const SnnNetwork& snn, std::size_t layer);

std::size_t snn_predict(const SnnNetwork& snn, const Tensor& input, const SimOptions& options = {});

struct PerturbedSlopes {
  SnnNetwork snn;
  std::size_t invalid_neurons = 0;
};

/// Adds N(0, sd) to every hidden neuron's slope, drawn from `seed` alone.
PerturbedSlopes perturb_slopes(const SnnNetwork& snn, double sd, std::uint64_t seed);

/// Integrates the instantaneous charge K of each arrival, earliest first,
/// against the unit's threshold; returns the index of the arrival that
/// makes it fire, if any.
std::optional<std::size_t> pool_unit_trigger(std::span<const double> arrivals,
                                             const PoolUnitParams& unit);

/// Deterministic 64-bit mix of two seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Plain-text raster: one block per layer, one line per unit.
void write_trace(std::ostream& out, const SpikeTrace& trace, const SnnNetwork& snn);

}  // namespace ttfs
