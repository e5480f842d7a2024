// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/error.hpp"

namespace ttfs {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Structure: return "structure";
    case ErrorKind::Invariant: return "invariant";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::Data: return "data";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

namespace {

std::string decorate(ErrorKind kind, const std::string& message,
                     std::optional<std::size_t> layer, const std::string& field) {
  std::string out = std::string(to_string(kind)) + " error";
  if (layer) out += " at layer " + std::to_string(*layer);
  if (!field.empty()) out += " (" + field + ")";
  return out + ": " + message;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::size_t> layer, std::string field)
    : std::runtime_error(decorate(kind, message, layer, field)),
      kind_(kind),
      layer_(layer),
      field_(std::move(field)) {}

}  // namespace ttfs
