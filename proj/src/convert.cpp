// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/convert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ttfs/error.hpp"

namespace ttfs {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::FixedAlpha: return "fixed_alpha";
    case Variant::IdenticalWeights: return "identical_weights";
    case Variant::PositiveSlope: return "positive_slope";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::FixedAlpha, Variant::IdenticalWeights, Variant::PositiveSlope}) {
    if (s == to_string(v)) return v;
  }
  throw Error(ErrorKind::Usage,
              "unknown variant '" + s + "' (fixed_alpha, identical_weights, positive_slope)");
}

PoolUnitParams convert_pooling(PoolMode mode, std::size_t inputs) {
  if (inputs == 0) throw Error(ErrorKind::Precondition, "pool unit without inputs");
  PoolUnitParams p;
  p.theta = 1.0;
  if (mode == PoolMode::Max || inputs == 1) {
    p.k = p.theta * (1.0 + 1e-6);
  } else {
    const auto q = static_cast<double>(inputs);
    p.k = p.theta * (2.0 * q - 1.0) / (2.0 * q * (q - 1.0));
  }
  return p;
}

namespace {

// Neurons per output channel (1 for dense layers).
std::size_t neurons_per_channel(const Shape& out_shape) {
  return out_shape.size() == 3 ? out_shape[1] * out_shape[2] : 1;
}

std::size_t kernel_length(const Tensor& weights) { return weights.size() / weights.dim(0); }

std::vector<double> channel_sums(const Tensor& weights, bool negative_only) {
  const std::size_t out = weights.dim(0);
  const std::size_t len = kernel_length(weights);
  const auto w = weights.data();
  std::vector<double> s(out, 0.0);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      const double v = w[i * len + j];
      if (!negative_only || v < 0.0) s[i] += v;
    }
  }
  return s;
}

double bias_at(const Layer& l, std::size_t neuron, std::size_t per_channel) {
  return l.has_positional_bias() ? l.bias[neuron] : l.bias[neuron / per_channel];
}

// J = alpha * w / (1 - sum w) per output channel.
Tensor convert_weights(const Tensor& w_bar, std::span<const double> channel_alpha,
                       std::span<const double> sums) {
  Tensor j = w_bar;
  const std::size_t len = kernel_length(w_bar);
  auto d = j.data();
  for (std::size_t i = 0; i < w_bar.dim(0); ++i) {
    const double scale = channel_alpha[i] / (1.0 - sums[i]);
    for (std::size_t k = 0; k < len; ++k) d[i * len + k] *= scale;
  }
  return j;
}

// 1 - s, moved by one ulp when that makes (1 - s) + s round to exactly 1.
double unit_complement(double s) {
  const double a = 1.0 - s;
  if (a + s == 1.0) return a;
  for (double c : {std::nextafter(a, 2.0 * a), std::nextafter(a, 0.0)}) {
    if (c + s == 1.0) return c;
  }
  return a;
}

}  // namespace

SnnNetwork convert(const ScaledNetwork& scaled, Variant variant, const ConvertOptions& options) {
  check_hyper(scaled.hyper);
  if (!scaled.calibrated) {
    throw Error(ErrorKind::Precondition, "network has not been calibrated", std::nullopt,
                "layer_max");
  }
  const ReluNetwork& net = scaled.net;
  validate(net);
  if (net.range_low != 0.0 || net.range_high != 1.0) {
    throw Error(ErrorKind::Precondition, "scaled network must take inputs in [0, 1]",
                std::nullopt, "input_range");
  }
  if (scaled.layer_max.size() != net.layers.size()) {
    throw Error(ErrorKind::Precondition, "layer_max does not match the layer count",
                std::nullopt, "layer_max");
  }
  const auto shapes = infer_shapes(net);
  const std::size_t readout = readout_index(net);

  SnnNetwork snn;
  snn.input_shape = net.input_shape;
  snn.variant = variant;
  snn.zeta = scaled.hyper.zeta;

  // Window of the stage whose spikes feed the current layer.
  double prev_min = 0.0;
  double prev_max = 1.0;

  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Layer& l = net.layers[k];
    SnnLayer s;
    s.in_shape = shapes[k];
    s.out_shape = shapes[k + 1];
    s.t_min_prev = prev_min;
    s.t_min = prev_min;
    s.t_max = prev_max;

    if (l.kind == LayerKind::BatchNorm) {
      throw Error(ErrorKind::Precondition, "batch norm must be fused before conversion", k,
                  "kind");
    }
    if (l.is_pool()) {
      s.kind = SnnLayerKind::Pool;
      s.pool = l.pool;
      s.pool_inputs = l.pool.window * l.pool.window;
      s.pool_k_max = convert_pooling(PoolMode::Max, s.pool_inputs).k;
      const PoolUnitParams mn = convert_pooling(PoolMode::Min, s.pool_inputs);
      s.pool_k_min = mn.k;
      s.pool_theta = mn.theta;
      snn.layers.push_back(std::move(s));
      continue;
    }
    if (l.kind == LayerKind::Flatten) {
      s.kind = SnnLayerKind::Flatten;
      snn.layers.push_back(std::move(s));
      continue;
    }

    s.geometry = l.kind;
    if (l.kind == LayerKind::Conv2d) s.conv = l.conv;
    const std::size_t n_out = shape_size(s.out_shape);
    const std::size_t per = neurons_per_channel(s.out_shape);
    const std::size_t channels = l.weights.dim(0);

    if (k == readout) {
      s.kind = SnnLayerKind::Readout;
      s.weights = l.weights;
      s.alpha = Tensor(s.out_shape);
      const double window = prev_max - prev_min;
      for (std::size_t i = 0; i < n_out; ++i) s.alpha[i] = bias_at(l, i, per) / window;
      s.t_min_prev = prev_min;
      s.t_min = prev_max;
      s.t_max = prev_max;
      snn.layers.push_back(std::move(s));
      continue;
    }

    s.kind = SnnLayerKind::Neuron;
    const std::vector<double> sums = row_sums(l);
    for (std::size_t c = 0; c < channels; ++c) {
      if (!(sums[c] < 1.0)) {
        throw Error(ErrorKind::Precondition,
                    "neuron " + std::to_string(c) + " has incoming weight sum " +
                        std::to_string(sums[c]) + ", needs < 1",
                    k, "weights");
      }
    }

    std::vector<double> channel_alpha(channels, 1.0);
    switch (variant) {
      case Variant::FixedAlpha:
        s.weights = convert_weights(l.weights, channel_alpha, sums);
        break;
      case Variant::IdenticalWeights:
        for (std::size_t c = 0; c < channels; ++c) channel_alpha[c] = unit_complement(sums[c]);
        s.weights = l.weights;
        break;
      case Variant::PositiveSlope: {
        // J scales linearly with alpha, so the margin is found at alpha = 1.
        const Tensor unit = convert_weights(l.weights, channel_alpha, sums);
        const std::vector<double> neg = channel_sums(unit, true);
        const double min_neg = neg.empty() ? 0.0 : *std::min_element(neg.begin(), neg.end());
        if (!(1.0 + min_neg > 0.0)) {
          const auto worst = static_cast<std::size_t>(
              std::min_element(neg.begin(), neg.end()) - neg.begin());
          throw Error(ErrorKind::Precondition,
                      "neuron " + std::to_string(worst) +
                          " has positive incoming weight sum >= 1; no slope keeps every "
                          "trajectory increasing",
                      k, "weights");
        }
        const double alpha = std::max(1.0, options.eps_margin - min_neg);
        std::fill(channel_alpha.begin(), channel_alpha.end(), alpha);
        s.weights = convert_weights(l.weights, channel_alpha, sums);
        break;
      }
    }

    const double bn = std::max((1.0 + scaled.hyper.zeta) * scaled.layer_max[k], scaled.hyper.b_floor);
    s.t_min_prev = prev_min;
    s.t_min = prev_max;
    s.t_max = prev_max + bn;
    const std::vector<double> j_sums = channel_sums(s.weights, false);
    s.alpha = Tensor(s.out_shape);
    s.threshold = Tensor(s.out_shape);
    for (std::size_t i = 0; i < n_out; ++i) {
      const std::size_t c = i / per;
      const double a = channel_alpha[c];
      s.alpha[i] = a;
      s.threshold[i] = a * (s.t_max - s.t_min_prev) + bn * j_sums[c] - (a + j_sums[c]) * bias_at(l, i, per);
    }
    if (!s.threshold.all_finite() || !s.weights.all_finite()) {
      throw Error(ErrorKind::Numeric, "non-finite spiking parameter", k, "threshold");
    }
    prev_min = s.t_min;
    prev_max = s.t_max;
    snn.layers.push_back(std::move(s));
  }
  validate(snn);
  return snn;
}

namespace {

const SnnLayer& neuron_layer(const SnnNetwork& snn, std::size_t layer) {
  if (layer >= snn.layers.size() || (snn.layers[layer].kind != SnnLayerKind::Neuron &&
                                     snn.layers[layer].kind != SnnLayerKind::Readout)) {
    throw Error(ErrorKind::Precondition, "not a neuron layer", layer);
  }
  return snn.layers[layer];
}

}  // namespace

Tensor slope_after_arrivals(const SnnNetwork& snn, std::size_t layer) {
  const SnnLayer& l = neuron_layer(snn, layer);
  const std::vector<double> sums = channel_sums(l.weights, false);
  const std::size_t per = neurons_per_channel(l.out_shape);
  Tensor out(l.out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = l.alpha[i] + sums[i / per];
  return out;
}

Tensor negative_input_sums(const SnnNetwork& snn, std::size_t layer) {
  const SnnLayer& l = neuron_layer(snn, layer);
  const std::vector<double> sums = channel_sums(l.weights, true);
  const std::size_t per = neurons_per_channel(l.out_shape);
  Tensor out(l.out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sums[i / per];
  return out;
}

Tensor inverse_weights(const SnnNetwork& snn, std::size_t layer) {
  const SnnLayer& l = neuron_layer(snn, layer);
  const std::vector<double> sums = channel_sums(l.weights, false);
  const std::size_t per = neurons_per_channel(l.out_shape);
  const std::size_t len = kernel_length(l.weights);
  Tensor w = l.weights;
  auto d = w.data();
  for (std::size_t c = 0; c < l.weights.dim(0); ++c) {
    const double denom = l.alpha[c * per] + sums[c];
    if (!(denom > 0.0)) {
      throw Error(ErrorKind::Precondition,
                  "neuron " + std::to_string(c * per) + " has non-positive slope after arrivals",
                  layer, "alpha");
    }
    for (std::size_t j = 0; j < len; ++j) d[c * len + j] /= denom;
  }
  return w;
}

double dynamical_threshold(const SnnNetwork& snn, std::size_t layer, std::size_t neuron,
                           double t) {
  const SnnLayer& l = neuron_layer(snn, layer);
  if (l.kind != SnnLayerKind::Neuron) {
    throw Error(ErrorKind::Precondition, "readout has no threshold", layer);
  }
  return l.threshold.data()[neuron] - l.alpha.data()[neuron] * (t - l.t_min_prev);
}

std::vector<std::size_t> neuron_layer_indices(const SnnNetwork& snn) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < snn.layers.size(); ++k) {
    if (snn.layers[k].kind == SnnLayerKind::Neuron) out.push_back(k);
  }
  return out;
}

void validate(const SnnNetwork& snn) {
  if (snn.layers.empty()) throw Error(ErrorKind::Invariant, "spiking network has no layers");
  if (snn.layers.back().kind != SnnLayerKind::Readout) {
    throw Error(ErrorKind::Invariant, "last layer must be the readout", snn.layers.size() - 1,
                "kind");
  }
  Shape shape = snn.input_shape;
  double prev_min = 0.0;
  double prev_max = 1.0;
  for (std::size_t k = 0; k < snn.layers.size(); ++k) {
    const SnnLayer& l = snn.layers[k];
    if (l.in_shape != shape) {
      throw Error(ErrorKind::Shape,
                  "input shape " + shape_to_string(l.in_shape) + " does not follow " +
                      shape_to_string(shape),
                  k, "in_shape");
    }
    shape = l.out_shape;
    if (l.kind == SnnLayerKind::Readout && k + 1 != snn.layers.size()) {
      throw Error(ErrorKind::Invariant, "readout before the last layer", k, "kind");
    }
    if (l.kind == SnnLayerKind::Pool || l.kind == SnnLayerKind::Flatten) {
      if (l.t_min != prev_min || l.t_max != prev_max) {
        throw Error(ErrorKind::Invariant, "relay layer window differs from its input", k, "t_min");
      }
      if (l.kind == SnnLayerKind::Pool &&
          (l.pool.modes.size() != l.in_shape.at(0) || l.pool_inputs != l.pool.window * l.pool.window)) {
        throw Error(ErrorKind::Invariant, "pool parameters do not match the input", k, "pool");
      }
      continue;
    }
    const std::size_t n_out = shape_size(l.out_shape);
    if (l.alpha.size() != n_out || !l.alpha.all_finite() || !l.weights.all_finite() ||
        l.weights.rank() < 2) {
      throw Error(ErrorKind::Invariant, "malformed weights or slopes", k, "alpha");
    }
    if (l.t_min_prev != prev_min) {
      throw Error(ErrorKind::Invariant, "drive onset differs from the presynaptic window", k,
                  "t_min_prev");
    }
    if (l.kind == SnnLayerKind::Readout) {
      if (l.t_max != prev_max) {
        throw Error(ErrorKind::Invariant, "readout must integrate until the last window closes", k,
                    "t_max");
      }
      continue;
    }
    if (l.threshold.size() != n_out || !l.threshold.all_finite()) {
      throw Error(ErrorKind::Invariant, "malformed thresholds", k, "threshold");
    }
    if (l.t_min != prev_max) {
      throw Error(ErrorKind::Invariant, "window must open when the previous one closes", k,
                  "t_min");
    }
    if (!(l.t_max > l.t_min)) {
      throw Error(ErrorKind::Invariant, "empty spiking window", k, "t_max");
    }
    const Tensor slope = slope_after_arrivals(snn, k);
    for (std::size_t i = 0; i < slope.size(); ++i) {
      if (!(slope[i] > 0.0)) {
        throw Error(ErrorKind::Invariant,
                    "neuron " + std::to_string(i) + " has non-positive slope after arrivals", k,
                    "alpha");
      }
    }
    prev_min = l.t_min;
    prev_max = l.t_max;
  }
}

}  // namespace ttfs
