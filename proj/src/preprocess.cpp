// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ttfs/error.hpp"
#include "ttfs/forward.hpp"
#include "ttfs/parallel.hpp"

namespace ttfs {

void check_hyper(const HyperParams& h) {
  if (!(h.delta > 0.0 && h.delta < 1.0)) {
    throw Error(ErrorKind::Usage, "delta must lie in (0, 1)", std::nullopt, "delta");
  }
  if (!(h.b_low > 0.0) || !std::isfinite(h.b_low)) {
    throw Error(ErrorKind::Usage, "b_low must be positive and finite", std::nullopt, "b_low");
  }
  if (!(h.zeta > -1.0) || !std::isfinite(h.zeta)) {
    throw Error(ErrorKind::Usage, "zeta must be finite and greater than -1", std::nullopt, "zeta");
  }
  if (!(h.b_floor > 0.0) || !std::isfinite(h.b_floor)) {
    throw Error(ErrorKind::Usage, "b_floor must be positive and finite", std::nullopt, "b_floor");
  }
}

namespace {

std::size_t out_channels(const Layer& l) { return l.weights.dim(0); }

std::size_t row_length(const Layer& l) { return l.weights.size() / l.weights.dim(0); }

// Scales output channel c of a Dense/Conv2d layer (weights and bias) by f.
void scale_output(Layer& l, std::size_t c, double f) {
  const std::size_t len = row_length(l);
  auto w = l.weights.data();
  for (std::size_t j = 0; j < len; ++j) w[c * len + j] *= f;
  if (l.has_positional_bias()) {
    const std::size_t inner = l.bias.size() / l.bias.dim(0);
    for (std::size_t j = 0; j < inner; ++j) l.bias[c * inner + j] *= f;
  } else {
    l.bias[c] *= f;
  }
}

// Index of the first Dense/Conv2d layer at or after `from`, flipping pool
// modes of channels whose scale is negative on the way.
std::size_t next_parameterized(ReluNetwork& net, std::size_t from, std::span<const double> kappa,
                               std::size_t origin) {
  for (std::size_t k = from; k < net.layers.size(); ++k) {
    Layer& l = net.layers[k];
    if (l.is_parameterized()) return k;
    if (l.is_pool()) {
      for (std::size_t c = 0; c < l.pool.modes.size(); ++c) {
        if (kappa[c] < 0.0) {
          l.pool.modes[c] = l.pool.modes[c] == PoolMode::Max ? PoolMode::Min : PoolMode::Max;
        }
      }
      normalize_pool_kind(l);
      continue;
    }
    if (l.kind == LayerKind::Flatten) continue;
    throw Error(ErrorKind::Structure,
                std::string("affine map cannot pass through a ") + to_string(l.kind) + " layer", k,
                "bn_position");
  }
  throw Error(ErrorKind::Structure, "no dense/conv2d layer follows", origin, "bn_position");
}

// Rewrites layer `target` so that feeding it x gives what it gave for
// kappa * x + shift, with one (kappa, shift) pair per input channel. Bias
// first, from the unscaled weights, then weights. Zero-padded taps see no
// shift, so a padded conv gets a per-location bias.
void fold_input_affine(Layer& target, const Shape& in_shape, std::span<const double> kappa,
                       std::span<const double> shift, std::size_t target_index) {
  const std::size_t channels = kappa.size();
  const bool any_shift = std::any_of(shift.begin(), shift.end(), [](double s) { return s != 0.0; });
  auto w = target.weights.data();
  if (target.kind == LayerKind::Dense) {
    const std::size_t out = target.weights.dim(0);
    const std::size_t in = target.weights.dim(1);
    if (in % channels != 0) {
      throw Error(ErrorKind::Shape, "input size is not a multiple of the channel count",
                  target_index, "weights");
    }
    const std::size_t per = in / channels;
    for (std::size_t r = 0; r < out; ++r) {
      if (any_shift) {
        double acc = 0.0;
        for (std::size_t j = 0; j < in; ++j) acc += shift[j / per] * w[r * in + j];
        target.bias[r] += acc;
      }
      for (std::size_t j = 0; j < in; ++j) w[r * in + j] *= kappa[j / per];
    }
    return;
  }

  const auto& m = target.conv;
  const std::size_t out_ch = target.weights.dim(0);
  const std::size_t in_ch = target.weights.dim(1);
  const std::size_t kh = m.kernel_h;
  const std::size_t kw = m.kernel_w;
  if (in_ch != channels) {
    throw Error(ErrorKind::Shape, "conv input channels differ from the folded channel count",
                target_index, "weights");
  }
  if (any_shift) {
    if (m.padded()) {
      const Shape out_shape = layer_output_shape(target, in_shape, target_index);
      const std::size_t oh = out_shape[1];
      const std::size_t ow = out_shape[2];
      const std::size_t ih = in_shape[1];
      const std::size_t iw = in_shape[2];
      Tensor bias(out_shape);
      for (std::size_t k = 0; k < out_ch; ++k) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t o = (k * oh + oy) * ow + ox;
            double acc = target.has_positional_bias() ? target.bias[o] : target.bias[k];
            for (std::size_t c = 0; c < in_ch; ++c) {
              double tap_sum = 0.0;
              for (std::size_t dy = 0; dy < kh; ++dy) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * m.stride + dy) -
                                static_cast<std::ptrdiff_t>(m.pad_top);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
                for (std::size_t dx = 0; dx < kw; ++dx) {
                  const auto ix = static_cast<std::ptrdiff_t>(ox * m.stride + dx) -
                                  static_cast<std::ptrdiff_t>(m.pad_left);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
                  tap_sum += w[((k * in_ch + c) * kh + dy) * kw + dx];
                }
              }
              acc += shift[c] * tap_sum;
            }
            bias[o] = acc;
          }
        }
      }
      target.bias = std::move(bias);
    } else {
      const std::size_t inner = target.has_positional_bias() ? target.bias.size() / out_ch : 1;
      for (std::size_t k = 0; k < out_ch; ++k) {
        double acc = 0.0;
        for (std::size_t c = 0; c < in_ch; ++c) {
          for (std::size_t t = 0; t < kh * kw; ++t) acc += shift[c] * w[(k * in_ch + c) * kh * kw + t];
        }
        for (std::size_t j = 0; j < inner; ++j) target.bias[k * inner + j] += acc;
      }
    }
  }
  for (std::size_t k = 0; k < out_ch; ++k) {
    for (std::size_t c = 0; c < in_ch; ++c) {
      for (std::size_t t = 0; t < kh * kw; ++t) w[(k * in_ch + c) * kh * kw + t] *= kappa[c];
    }
  }
}

// Folds a per-channel affine map sitting on the output of layer `from - 1`
// (or the network input when from == 0) into the next Dense/Conv2d layer.
void fold_forward(ReluNetwork& net, std::size_t from, std::span<const double> kappa,
                  std::span<const double> shift, std::size_t origin) {
  const std::size_t target = next_parameterized(net, from, kappa, origin);
  const auto shapes = infer_shapes(net);
  fold_input_affine(net.layers[target], shapes[target], kappa, shift, target);
}

}  // namespace

ReluNetwork fuse_bn_before_relu(const ReluNetwork& net, std::size_t bn_index) {
  if (bn_index >= net.layers.size() || net.layers[bn_index].kind != LayerKind::BatchNorm) {
    throw Error(ErrorKind::Structure, "not a batch norm layer", bn_index, "kind");
  }
  if (bn_index == 0 || !net.layers[bn_index - 1].is_parameterized()) {
    throw Error(ErrorKind::Structure, "batch norm before ReLU must follow a dense/conv2d layer",
                bn_index, "bn_position");
  }
  ReluNetwork out = net;
  const BatchNormParams& bn = net.layers[bn_index].bn;
  Layer& prev = out.layers[bn_index - 1];
  const std::size_t ch = out_channels(prev);
  if (bn.channels() != ch) {
    throw Error(ErrorKind::Shape, "batch norm channel count differs from the previous layer",
                bn_index, "bn_params");
  }
  const std::size_t len = row_length(prev);
  const std::size_t inner = prev.has_positional_bias() ? prev.bias.size() / ch : 1;
  auto w = prev.weights.data();
  for (std::size_t c = 0; c < ch; ++c) {
    const double kappa = bn.kappa(c);
    for (std::size_t j = 0; j < inner; ++j) {
      double& b = prev.bias[c * inner + j];
      b = kappa * (b - bn.mean[c]) + bn.beta[c];
    }
    for (std::size_t j = 0; j < len; ++j) w[c * len + j] *= kappa;
  }
  prev.has_relu = true;
  out.layers.erase(out.layers.begin() + static_cast<std::ptrdiff_t>(bn_index));
  return out;
}

ReluNetwork fuse_bn_after_relu(const ReluNetwork& net, std::size_t bn_index) {
  if (bn_index >= net.layers.size() || net.layers[bn_index].kind != LayerKind::BatchNorm) {
    throw Error(ErrorKind::Structure, "not a batch norm layer", bn_index, "kind");
  }
  ReluNetwork out = net;
  const BatchNormParams bn = net.layers[bn_index].bn;
  const std::size_t ch = bn.channels();
  std::vector<double> kappa(ch);
  std::vector<double> shift(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    kappa[c] = bn.kappa(c);
    shift[c] = bn.beta[c] - kappa[c] * bn.mean[c];
  }
  out.layers.erase(out.layers.begin() + static_cast<std::ptrdiff_t>(bn_index));
  fold_forward(out, bn_index, kappa, shift, bn_index);
  return out;
}

ReluNetwork fuse_all_batch_norms(const ReluNetwork& net) {
  ReluNetwork out = net;
  for (;;) {
    const auto it = std::find_if(out.layers.begin(), out.layers.end(),
                                 [](const Layer& l) { return l.kind == LayerKind::BatchNorm; });
    if (it == out.layers.end()) return out;
    const auto k = static_cast<std::size_t>(it - out.layers.begin());
    out = it->bn_position == BnPosition::BeforeRelu ? fuse_bn_before_relu(out, k)
                                                    : fuse_bn_after_relu(out, k);
  }
}

ReluNetwork normalize_input_range(const ReluNetwork& net) {
  const double p = net.range_low;
  const double q = net.range_high;
  if (!(q > p)) {
    throw Error(ErrorKind::Precondition, "degenerate input range, need p < q", std::nullopt,
                "input_range");
  }
  if (p == 0.0 && q == 1.0) return net;
  ReluNetwork out = net;
  const std::size_t ch = net.input_shape.size() == 3 ? net.input_shape[0] : 1;
  const std::vector<double> kappa(ch, q - p);
  const std::vector<double> shift(ch, p);
  fold_forward(out, 0, kappa, shift, 0);
  out.range_low = 0.0;
  out.range_high = 1.0;
  return out;
}

std::vector<double> row_sums(const Layer& layer) {
  const std::size_t out = out_channels(layer);
  const std::size_t len = row_length(layer);
  const auto w = layer.weights.data();
  std::vector<double> s(out, 0.0);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < len; ++j) s[i] += w[i * len + j];
  }
  return s;
}

std::vector<double> positive_row_sums(const Layer& layer) {
  const std::size_t out = out_channels(layer);
  const std::size_t len = row_length(layer);
  const auto w = layer.weights.data();
  std::vector<double> s(out, 0.0);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < len; ++j) s[i] += std::max(w[i * len + j], 0.0);
  }
  return s;
}

namespace {

double row_sum(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v;
  return s;
}

double positive_row_sum(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += std::max(v, 0.0);
  return s;
}

// Largest factor f <= f0 for which the scaled row meets every bound.
double settle_factor(std::span<const double> row, double f0, double upper, double lower,
                     bool bound_positive) {
  std::vector<double> scaled(row.size());
  double f = f0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    for (std::size_t j = 0; j < row.size(); ++j) scaled[j] = row[j] * f;
    const double s = row_sum(scaled);
    const bool ok = s <= upper && s >= lower && (!bound_positive || positive_row_sum(scaled) <= upper);
    if (ok) return f;
    f = attempt < 16 ? std::nextafter(f, 0.0) : f * (1.0 - 1e-12);
  }
  throw Error(ErrorKind::Numeric, "cannot bring the weight sum within bounds");
}

}  // namespace

RescaleResult rescale_weights(const ReluNetwork& net, double delta, double b_low,
                              bool bound_positive_sum) {
  HyperParams h;
  h.delta = delta;
  h.b_low = b_low;
  check_hyper(h);
  RescaleResult r;
  r.net = net;
  r.scale_factors.assign(net.layers.size(), {});
  const double upper = 1.0 - delta;
  for (std::size_t k : hidden_layer_indices(net)) {
    Layer& l = r.net.layers[k];
    const std::size_t out = out_channels(l);
    const std::size_t len = row_length(l);
    std::vector<double> factors(out, 1.0);
    const auto w = l.weights.data();
    for (std::size_t i = 0; i < out; ++i) {
      const std::span<const double> row(w.data() + i * len, len);
      const double c = row_sum(row);
      double f = 1.0;
      if (c > upper) f = upper / c;
      else if (c <= -b_low) f = b_low / std::abs(c);
      if (bound_positive_sum) {
        const double pos = positive_row_sum(row);
        if (pos > upper) f = std::min(f, upper / pos);
      }
      if (f != 1.0) f = settle_factor(row, f, upper, -b_low, bound_positive_sum);
      factors[i] = f;
    }
    bool changed = false;
    for (std::size_t i = 0; i < out; ++i) {
      if (factors[i] != 1.0) {
        scale_output(l, i, factors[i]);
        changed = true;
      }
    }
    if (changed) {
      std::vector<double> inverse(out);
      for (std::size_t i = 0; i < out; ++i) inverse[i] = 1.0 / factors[i];
      const std::vector<double> zero(out, 0.0);
      fold_forward(r.net, k + 1, inverse, zero, k);
    }
    r.scale_factors[k] = std::move(factors);
  }
  return r;
}

Tensor recover_original(const ScaledNetwork& scaled, std::size_t layer, const Tensor& values) {
  if (layer >= scaled.scale_factors.size()) {
    throw Error(ErrorKind::Precondition, "unknown layer index", layer);
  }
  const auto& f = scaled.scale_factors[layer];
  if (f.empty()) {
    throw Error(ErrorKind::Precondition, "layer carries no scale factors", layer);
  }
  Tensor out = values;
  const std::size_t per = values.size() / f.size();
  if (per == 0 || values.size() % f.size() != 0) {
    throw Error(ErrorKind::Shape, "values do not match the layer's neuron count", layer);
  }
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / f[i / per];
  return out;
}

std::vector<double> calibrate(const ReluNetwork& scaled_net, std::span<const Tensor> inputs,
                              unsigned workers) {
  if (inputs.empty()) {
    throw Error(ErrorKind::Data, "calibration needs at least one sample", std::nullopt,
                "calibration");
  }
  const auto hidden = hidden_layer_indices(scaled_net);
  std::vector<std::vector<double>> per_sample(inputs.size());
  parallel_for(inputs.size(), workers, [&](std::size_t s) {
    const ForwardResult r = relu_forward(scaled_net, inputs[s]);
    std::vector<double> m(scaled_net.layers.size(), 0.0);
    for (std::size_t k : hidden) {
      for (double v : r.outputs[k].data()) m[k] = std::max(m[k], v);
    }
    per_sample[s] = std::move(m);
  });
  std::vector<double> layer_max(scaled_net.layers.size(), 0.0);
  for (const auto& m : per_sample) {
    for (std::size_t k = 0; k < m.size(); ++k) layer_max[k] = std::max(layer_max[k], m[k]);
  }
  return layer_max;
}

Tensor normalize_sample(const ScaledNetwork& scaled, const Tensor& x) {
  const double p = scaled.source_low;
  const double span = scaled.source_high - scaled.source_low;
  Tensor out = x;
  for (double& v : out.data()) v = (v - p) / span;
  return out;
}

ScaledNetwork preprocess(const ReluNetwork& net, std::span<const Tensor> calibration,
                         const HyperParams& hyper, unsigned workers) {
  check_hyper(hyper);
  validate(net);
  ScaledNetwork s;
  s.source_low = net.range_low;
  s.source_high = net.range_high;
  s.hyper = hyper;
  const ReluNetwork fused = fuse_all_batch_norms(net);
  const ReluNetwork normalized = normalize_input_range(fused);
  RescaleResult r =
      rescale_weights(normalized, hyper.delta, hyper.b_low, hyper.bound_positive_sum);
  s.net = std::move(r.net);
  s.scale_factors = std::move(r.scale_factors);
  validate(s.net);
  std::vector<Tensor> normalized_inputs;
  normalized_inputs.reserve(calibration.size());
  for (const Tensor& x : calibration) normalized_inputs.push_back(normalize_sample(s, x));
  s.layer_max = calibrate(s.net, normalized_inputs, workers);
  s.calibrated = true;
  return s;
}

}  // namespace ttfs
