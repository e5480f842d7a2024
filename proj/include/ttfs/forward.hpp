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

/// Per-layer values of one inference. For Dense/Conv2d layers `activations`
/// holds the affine result a and `outputs` the value passed on (the ReLU
/// output x, or a itself when the ReLU is deferred past a following
/// before-ReLU batch norm). For the other kinds both hold the layer output.
struct ForwardResult {
  std::vector<Tensor> activations;
  std::vector<Tensor> outputs;
  Tensor logits;
};

/// Reference inference. Deterministic and pure; safe to call concurrently.
/// Throws ErrorKind::Shape for a mismatched input and ErrorKind::Numeric,
/// naming the layer, if an intermediate value overflows.
ForwardResult relu_forward(const ReluNetwork& net, const Tensor& input);

/// Logits only, without retaining intermediate tensors.
Tensor relu_logits(const ReluNetwork& net, const Tensor& input);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

std::size_t predict(const ReluNetwork& net, const Tensor& input);

/// Whether the ReLU of parameterized layer k is applied right after it
/// (false when layer k + 1 is a before-ReLU batch norm).
bool relu_applied_in_place(const ReluNetwork& net, std::size_t k);

// Single-layer kernels shared with preprocessing and the spiking simulator.
Tensor apply_dense(const Layer& layer, const Tensor& input);
Tensor apply_conv2d(const Layer& layer, const Tensor& input);
Tensor apply_pool(const Layer& layer, const Tensor& input);
Tensor apply_batch_norm(const Layer& layer, const Tensor& input);
void relu_inplace(Tensor& t);

}  // namespace ttfs
