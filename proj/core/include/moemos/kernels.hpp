// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "moemos/rng.hpp"
#include "moemos/tensor.hpp"

namespace moemos {

/// y = W x + b. W is rows x cols with cols == x.size(), b.size() == rows.
std::vector<double> linear_forward(std::span<const double> x, const ParamTensor& W,
                                   const ParamTensor& b);

struct LinearGrads {
    std::vector<double> w; // row-major, same layout as W.values
    std::vector<double> b;
    std::vector<double> x;
};

/// Reverse-mode gradients for linear_forward:
/// dW = upstream (x) x, db = upstream, dx = W^T upstream.
LinearGrads linear_backward(std::span<const double> x, const ParamTensor& W,
                            std::span<const double> upstream);

/// Accumulating variant used in training loops: adds dW/db into the tensors'
/// grad buffers and writes dx into dx_out (dx_out.size() == W.cols()).
void linear_backward_acc(std::span<const double> x, ParamTensor& W, ParamTensor& b,
                         std::span<const double> upstream, std::span<double> dx_out);

/// Numerically stable softmax (max subtraction). Rejects empty or NaN input.
std::vector<double> softmax(std::span<const double> z);

/// dL/dz given g = softmax(z) and upstream = dL/dg:
/// dz_i = g_i (upstream_i - sum_j g_j upstream_j).
std::vector<double> softmax_backward(std::span<const double> softmax_out,
                                     std::span<const double> upstream);

std::vector<double> relu(std::span<const double> z);

/// dz_i = upstream_i if pre_activation_i > 0, else 0 (subgradient at 0 is 0).
std::vector<double> relu_backward(std::span<const double> pre_activation,
                                  std::span<const double> upstream);

/// Inverted dropout mask: each entry 0 with probability rate, else 1/(1-rate).
/// Training-mode only; evaluation uses the identity mask. rate must be in [0,1).
std::vector<double> dropout_mask(std::size_t len, double rate, RngState& rng);

} // namespace moemos
