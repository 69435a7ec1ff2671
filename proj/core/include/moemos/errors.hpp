// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace moemos {

/// Contract or configuration violation (bad shapes, bad config values,
/// malformed CLI input). Maps to exit code 1 in the CLI.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failure while executing an otherwise valid request (I/O, parse errors,
/// training divergence). Maps to exit code 2 in the CLI.
class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace moemos
