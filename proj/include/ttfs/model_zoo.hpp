// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ttfs/model_io.hpp"
#include "ttfs/network.hpp"

namespace ttfs {

// Desk-scale networks with random hidden weights, batch norm statistics
// measured on synthetic data, and a ridge-regression readout so that
// accuracy figures mean something.

enum class ZooModel { Mlp, LeNet, Vgg };

const char* to_string(ZooModel m);
ZooModel zoo_model_from_string(const std::string& s);

struct PrototypeSpec {
  Shape shape;
  double low = 0.0;
  double high = 1.0;
  std::size_t classes = 10;
  /// Per-pixel Gaussian noise around the class prototype, relative to high - low.
  double noise = 0.3;
};

/// Labeled samples scattered around one random prototype per class, clipped
/// to [low, high]. Prototypes depend on `prototype_seed` only, samples on
/// `sample_seed`.
Dataset make_prototype_dataset(const PrototypeSpec& spec, std::size_t n,
                               std::uint64_t prototype_seed, std::uint64_t sample_seed);

struct ZooBundle {
  ReluNetwork net;
  Dataset train;
  Dataset calibration;
  Dataset eval;
};

struct ZooOptions {
  std::size_t n_train = 1000;
  std::size_t n_calibration = 1000;
  std::size_t n_eval = 1000;
  double ridge = 1.0;
};

/// MLP 64-48-32-24-10 on [-1, 1]; LeNet5-shape CNN on [0, 1] x 28x28 with
/// batch norm before ReLU; VGG-style block on [-3, 3] x 3x16x16 with batch
/// norm after ReLU, zero padding, max pooling and one negative BN scale.
ZooBundle make_zoo_model(ZooModel model, std::uint64_t seed, const ZooOptions& options = {});

/// Dense ReLU network with He-scaled Gaussian weights and a random readout.
ReluNetwork make_random_mlp(const std::vector<std::size_t>& sizes, double low, double high,
                            std::uint64_t seed);

/// Replaces the readout of `net` by ridge regression onto one-hot labels,
/// fitted on the features entering the readout.
void fit_readout(ReluNetwork& net, const Dataset& train, double ridge);

}  // namespace ttfs
