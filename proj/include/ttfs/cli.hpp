// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace ttfs {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

/// Entry point of the `ttfs` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ttfs
