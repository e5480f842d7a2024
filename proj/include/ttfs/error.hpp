// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace ttfs {

enum class ErrorKind {
  Shape,         // tensor shape incompatible with a layer or network
  Numeric,       // non-finite value produced or supplied
  Structure,     // layer ordering not supported by an operation
  Invariant,     // a type invariant does not hold
  Precondition,  // operation precondition violated
  Io,            // file could not be read or written
  Format,        // manifest malformed or unsupported version
  Checksum,      // blob contents do not match the manifest
  Data,          // dataset record problem
  Usage,         // bad parameters from the command line or config
};

const char* to_string(ErrorKind kind);

/// Exception carrying a machine-checkable category plus optional location
/// (layer index, dataset record, field name) for diagnostics.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> layer = std::nullopt,
        std::string field = {});

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> layer() const noexcept { return layer_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> layer_;
  std::string field_;
};

}  // namespace ttfs
