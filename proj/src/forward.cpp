// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/forward.hpp"

#include <algorithm>
#include <cmath>

#include "ttfs/error.hpp"

namespace ttfs {

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::Shape, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void relu_inplace(Tensor& t) {
  for (double& v : t.data()) v = std::max(v, 0.0);
}

Tensor apply_dense(const Layer& layer, const Tensor& input) {
  const std::size_t out = layer.weights.dim(0);
  const std::size_t in = layer.weights.dim(1);
  const auto w = layer.weights.data();
  const auto x = input.data();
  Tensor y({out});
  for (std::size_t i = 0; i < out; ++i) {
    double acc = layer.bias[i];
    const double* row = w.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

Tensor apply_conv2d(const Layer& layer, const Tensor& input) {
  const auto& m = layer.conv;
  const std::size_t out_ch = layer.weights.dim(0);
  const std::size_t in_ch = layer.weights.dim(1);
  const std::size_t kh = m.kernel_h;
  const std::size_t kw = m.kernel_w;
  const std::size_t ih = input.dim(1);
  const std::size_t iw = input.dim(2);
  const std::size_t oh = (ih + m.pad_top + m.pad_bottom - kh) / m.stride + 1;
  const std::size_t ow = (iw + m.pad_left + m.pad_right - kw) / m.stride + 1;
  const bool positional = layer.has_positional_bias();
  const auto w = layer.weights.data();
  const auto x = input.data();

  Tensor y({out_ch, oh, ow});
  for (std::size_t k = 0; k < out_ch; ++k) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t o = (k * oh + oy) * ow + ox;
        double acc = positional ? layer.bias[o] : layer.bias[k];
        for (std::size_t c = 0; c < in_ch; ++c) {
          for (std::size_t dy = 0; dy < kh; ++dy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * m.stride + dy) -
                                      static_cast<std::ptrdiff_t>(m.pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * m.stride + dx) -
                                        static_cast<std::ptrdiff_t>(m.pad_left);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
              acc += w[((k * in_ch + c) * kh + dy) * kw + dx] *
                     x[(c * ih + static_cast<std::size_t>(iy)) * iw + static_cast<std::size_t>(ix)];
            }
          }
        }
        y[o] = acc;
      }
    }
  }
  return y;
}

Tensor apply_pool(const Layer& layer, const Tensor& input) {
  const auto& p = layer.pool;
  const std::size_t ch = input.dim(0);
  const std::size_t ih = input.dim(1);
  const std::size_t iw = input.dim(2);
  const std::size_t oh = (ih - p.window) / p.stride + 1;
  const std::size_t ow = (iw - p.window) / p.stride + 1;
  Tensor y({ch, oh, ow});
  for (std::size_t c = 0; c < ch; ++c) {
    const bool take_max = p.modes[c] == PoolMode::Max;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = input[(c * ih + oy * p.stride) * iw + ox * p.stride];
        for (std::size_t dy = 0; dy < p.window; ++dy) {
          for (std::size_t dx = 0; dx < p.window; ++dx) {
            const double v = input[(c * ih + oy * p.stride + dy) * iw + ox * p.stride + dx];
            best = take_max ? std::max(best, v) : std::min(best, v);
          }
        }
        y[(c * oh + oy) * ow + ox] = best;
      }
    }
  }
  return y;
}

Tensor apply_batch_norm(const Layer& layer, const Tensor& input) {
  const auto& bn = layer.bn;
  const std::size_t ch = input.dim(0);
  const std::size_t inner = input.size() / ch;
  Tensor y = input;
  for (std::size_t c = 0; c < ch; ++c) {
    const double scale = bn.kappa(c);
    for (std::size_t i = 0; i < inner; ++i) {
      double& v = y[c * inner + i];
      v = scale * (v - bn.mean[c]) + bn.beta[c];
    }
  }
  return y;
}

bool relu_applied_in_place(const ReluNetwork& net, std::size_t k) {
  const Layer& l = net.layers[k];
  if (!l.has_relu) return false;
  if (k + 1 < net.layers.size()) {
    const Layer& next = net.layers[k + 1];
    if (next.kind == LayerKind::BatchNorm && next.bn_position == BnPosition::BeforeRelu) {
      return false;
    }
  }
  return true;
}

namespace {

template <typename Sink>
Tensor run_forward(const ReluNetwork& net, const Tensor& input, Sink&& sink) {
  if (input.shape() != net.input_shape) {
    throw Error(ErrorKind::Shape,
                "input shape " + shape_to_string(input.shape()) + " does not match network input " +
                    shape_to_string(net.input_shape),
                0);
  }
  Tensor x = input;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Layer& l = net.layers[k];
    // Throws on incompatible shapes before any kernel indexes out of range.
    layer_output_shape(l, x.shape(), k);
    Tensor a;
    switch (l.kind) {
      case LayerKind::Dense: a = apply_dense(l, x); break;
      case LayerKind::Conv2d: a = apply_conv2d(l, x); break;
      case LayerKind::BatchNorm: a = apply_batch_norm(l, x); break;
      case LayerKind::MaxPool:
      case LayerKind::MinPool: a = apply_pool(l, x); break;
      case LayerKind::Flatten: a = x.reshaped({x.size()}); break;
    }
    if (!a.all_finite()) {
      throw Error(ErrorKind::Numeric, "non-finite value in layer output", k);
    }
    Tensor out = a;
    const bool bn_relu =
        l.kind == LayerKind::BatchNorm && l.bn_position == BnPosition::BeforeRelu;
    if ((l.is_parameterized() && relu_applied_in_place(net, k)) || bn_relu) relu_inplace(out);
    sink(k, std::move(a), out);
    x = std::move(out);
  }
  return x;
}

}  // namespace

ForwardResult relu_forward(const ReluNetwork& net, const Tensor& input) {
  ForwardResult r;
  r.activations.reserve(net.layers.size());
  r.outputs.reserve(net.layers.size());
  r.logits = run_forward(net, input, [&](std::size_t, Tensor a, const Tensor& out) {
    r.activations.push_back(std::move(a));
    r.outputs.push_back(out);
  });
  return r;
}

Tensor relu_logits(const ReluNetwork& net, const Tensor& input) {
  return run_forward(net, input, [](std::size_t, Tensor, const Tensor&) {});
}

std::size_t predict(const ReluNetwork& net, const Tensor& input) {
  return argmax(relu_logits(net, input).data());
}

}  // namespace ttfs
