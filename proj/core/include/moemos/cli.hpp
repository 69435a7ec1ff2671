// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace moemos::cli {

/// Subcommands: generate, train, evaluate, rank, grad-check. Exit codes:
/// 0 success, 1 validation/usage error, 2 runtime failure (including a
/// grad-check error above threshold).
int run_cli(const std::vector<std::string>& args);

} // namespace moemos::cli
