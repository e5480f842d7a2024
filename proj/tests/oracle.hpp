// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Test-only reference code, written independently of the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ttfs/network.hpp"
#include "ttfs/tensor.hpp"

namespace ttfs::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor(shape, std::move(v));
}

inline std::vector<double> pad_image(const std::vector<double>& x, std::size_t ch, std::size_t h,
                                     std::size_t w, const ConvMeta& m) {
  const std::size_t ph = h + m.pad_top + m.pad_bottom;
  const std::size_t pw = w + m.pad_left + m.pad_right;
  std::vector<double> out(ch * ph * pw, 0.0);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t z = 0; z < w; ++z)
        out[(c * ph + y + m.pad_top) * pw + z + m.pad_left] = x[(c * h + y) * w + z];
  return out;
}

// Forward pass over an explicitly padded copy of every conv input.
inline std::vector<double> oracle_logits(const ReluNetwork& net, const Tensor& input) {
  std::vector<double> x(input.values());
  Shape s = input.shape();
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Layer& l = net.layers[k];
    std::vector<double> y;
    bool relu = false;
    switch (l.kind) {
      case LayerKind::Dense: {
        const std::size_t out = l.weights.dim(0), in = l.weights.dim(1);
        y.resize(out);
        for (std::size_t i = 0; i < out; ++i) {
          const double* row = l.weights.data().data() + i * in;
          y[i] = std::inner_product(row, row + in, x.begin(), 0.0) + l.bias[i];
        }
        s = {out};
        relu = l.has_relu;
        break;
      }
      case LayerKind::Conv2d: {
        const ConvMeta& m = l.conv;
        const std::size_t ch = s[0], h = s[1], w = s[2];
        const std::vector<double> p = pad_image(x, ch, h, w, m);
        const std::size_t ph = h + m.pad_top + m.pad_bottom, pw = w + m.pad_left + m.pad_right;
        const std::size_t oc = l.weights.dim(0);
        const std::size_t oh = (ph - m.kernel_h) / m.stride + 1, ow = (pw - m.kernel_w) / m.stride + 1;
        y.assign(oc * oh * ow, 0.0);
        for (std::size_t o = 0; o < oc; ++o)
          for (std::size_t a = 0; a < oh; ++a)
            for (std::size_t b = 0; b < ow; ++b) {
              double acc = 0.0;
              for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t dy = 0; dy < m.kernel_h; ++dy)
                  for (std::size_t dx = 0; dx < m.kernel_w; ++dx)
                    acc += l.weights.at({o, c, dy, dx}) *
                           p[(c * ph + a * m.stride + dy) * pw + b * m.stride + dx];
              const double bias = l.bias.rank() == 3 ? l.bias.at({o, a, b}) : l.bias[o];
              y[(o * oh + a) * ow + b] = acc + bias;
            }
        s = {oc, oh, ow};
        relu = l.has_relu;
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t ch = s[0], inner = x.size() / ch;
        y = x;
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t i = 0; i < inner; ++i) {
            double& v = y[c * inner + i];
            v = (v - l.bn.mean[c]) / std::sqrt(l.bn.var[c] + l.bn.epsilon) * l.bn.gamma[c] +
                l.bn.beta[c];
          }
        relu = l.bn_position == BnPosition::BeforeRelu;
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::MinPool: {
        const std::size_t ch = s[0], h = s[1], w = s[2], win = l.pool.window, st = l.pool.stride;
        const std::size_t oh = (h - win) / st + 1, ow = (w - win) / st + 1;
        y.resize(ch * oh * ow);
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t a = 0; a < oh; ++a)
            for (std::size_t b = 0; b < ow; ++b) {
              std::vector<double> window;
              for (std::size_t dy = 0; dy < win; ++dy)
                for (std::size_t dx = 0; dx < win; ++dx)
                  window.push_back(x[(c * h + a * st + dy) * w + b * st + dx]);
              y[(c * oh + a) * ow + b] = l.pool.modes[c] == PoolMode::Max
                                             ? *std::max_element(window.begin(), window.end())
                                             : *std::min_element(window.begin(), window.end());
            }
        s = {ch, oh, ow};
        break;
      }
      case LayerKind::Flatten:
        y = x;
        s = {x.size()};
        break;
    }
    // A before-ReLU batch norm takes over the ReLU of the layer it follows.
    const bool deferred = l.is_parameterized() && k + 1 < net.layers.size() &&
                          net.layers[k + 1].kind == LayerKind::BatchNorm &&
                          net.layers[k + 1].bn_position == BnPosition::BeforeRelu;
    if (relu && !deferred)
      for (double& v : y) v = std::max(v, 0.0);
    x = std::move(y);
  }
  return x;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// Fresh empty directory under the system temp dir, unique per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ttfs_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ttfs::testing
