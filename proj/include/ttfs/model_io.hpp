// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ttfs/convert.hpp"
#include "ttfs/network.hpp"
#include "ttfs/preprocess.hpp"
#include "ttfs/tensor.hpp"

namespace ttfs {

// Every artifact is a JSON manifest plus a blob of little-endian IEEE-754
// doubles. Manifests locate tensors by byte offset into the blob and carry
// a 64-bit FNV-1a checksum of it. docs/FORMAT.md describes the layout.

inline constexpr int kFormatVersion = 1;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

struct Sample {
  Tensor input;
  std::optional<std::size_t> label;
};

struct Dataset {
  Shape input_shape;
  std::vector<Sample> samples;

  std::vector<Tensor> inputs() const;
  bool labeled() const;
};

/// Blob path stored in the manifest, resolved against the manifest's directory.
std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path);

void save_model(const ReluNetwork& net, const std::filesystem::path& manifest_path,
                const std::filesystem::path& blob_path);
ReluNetwork load_model(const std::filesystem::path& manifest_path,
                       const std::filesystem::path& blob_path);
ReluNetwork load_model(const std::filesystem::path& manifest_path);

void save_dataset(const Dataset& data, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& blob_path);
Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& blob_path);
Dataset load_dataset(const std::filesystem::path& manifest_path);

void save_scaled(const ScaledNetwork& scaled, const std::filesystem::path& manifest_path,
                 const std::filesystem::path& blob_path);
ScaledNetwork load_scaled(const std::filesystem::path& manifest_path);

void save_snn(const SnnNetwork& snn, const std::filesystem::path& manifest_path,
              const std::filesystem::path& blob_path);
SnnNetwork load_snn(const std::filesystem::path& manifest_path);

}  // namespace ttfs
