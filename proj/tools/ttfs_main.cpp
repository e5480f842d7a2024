// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "ttfs/cli.hpp"

int main(int argc, char** argv) { return ttfs::run_cli(argc, argv, std::cout, std::cerr); }
