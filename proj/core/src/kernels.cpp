// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "moemos/errors.hpp"

namespace moemos {

namespace {

void check_linear_shapes(std::span<const double> x, const ParamTensor& W,
                         const ParamTensor& b) {
    if (W.rank() != 2) {
        throw ValidationError("linear: weight tensor " + W.name + " must be rank 2");
    }
    if (x.size() != W.cols()) {
        throw ValidationError("linear: input length " + std::to_string(x.size()) +
                              " does not match " + W.name + " shape " +
                              std::to_string(W.rows()) + "x" + std::to_string(W.cols()));
    }
    if (b.size() != W.rows()) {
        throw ValidationError("linear: bias length " + std::to_string(b.size()) +
                              " does not match " + W.name + " shape " +
                              std::to_string(W.rows()) + "x" + std::to_string(W.cols()));
    }
}

} // namespace

std::vector<double> linear_forward(std::span<const double> x, const ParamTensor& W,
                                   const ParamTensor& b) {
    check_linear_shapes(x, W, b);
    const std::size_t rows = W.rows();
    const std::size_t cols = W.cols();
    std::vector<double> y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = W.values.data() + r * cols;
        double acc = b.values[r];
        for (std::size_t c = 0; c < cols; ++c) {
            acc += wr[c] * x[c];
        }
        y[r] = acc;
    }
    return y;
}

LinearGrads linear_backward(std::span<const double> x, const ParamTensor& W,
                            std::span<const double> upstream) {
    if (upstream.size() != W.rows()) {
        throw ValidationError("linear_backward: upstream length " +
                              std::to_string(upstream.size()) + " does not match " +
                              W.name + " rows " + std::to_string(W.rows()));
    }
    if (x.size() != W.cols()) {
        throw ValidationError("linear_backward: input length " + std::to_string(x.size()) +
                              " does not match " + W.name + " cols " +
                              std::to_string(W.cols()));
    }
    LinearGrads g;
    const std::size_t rows = W.rows();
    const std::size_t cols = W.cols();
    g.w.resize(rows * cols);
    g.b.assign(upstream.begin(), upstream.end());
    g.x.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double u = upstream[r];
        const double* wr = W.values.data() + r * cols;
        double* gr = g.w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            gr[c] = u * x[c];
            g.x[c] += wr[c] * u;
        }
    }
    return g;
}

void linear_backward_acc(std::span<const double> x, ParamTensor& W, ParamTensor& b,
                         std::span<const double> upstream, std::span<double> dx_out) {
    const std::size_t rows = W.rows();
    const std::size_t cols = W.cols();
    std::fill(dx_out.begin(), dx_out.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double u = upstream[r];
        b.grad[r] += u;
        const double* wr = W.values.data() + r * cols;
        double* gr = W.grad.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            gr[c] += u * x[c];
            dx_out[c] += wr[c] * u;
        }
    }
}

std::vector<double> softmax(std::span<const double> z) {
    if (z.empty()) {
        throw ValidationError("softmax: empty input");
    }
    double zmax = z[0];
    for (double v : z) {
        if (std::isnan(v)) {
            throw ValidationError("softmax: NaN input");
        }
        zmax = std::max(zmax, v);
    }
    std::vector<double> out(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - zmax);
        sum += out[i];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

std::vector<double> softmax_backward(std::span<const double> softmax_out,
                                     std::span<const double> upstream) {
    if (softmax_out.size() != upstream.size()) {
        throw ValidationError("softmax_backward: size mismatch");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < softmax_out.size(); ++i) {
        dot += softmax_out[i] * upstream[i];
    }
    std::vector<double> dz(softmax_out.size());
    for (std::size_t i = 0; i < softmax_out.size(); ++i) {
        dz[i] = softmax_out[i] * (upstream[i] - dot);
    }
    return dz;
}

std::vector<double> relu(std::span<const double> z) {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = z[i] > 0.0 ? z[i] : 0.0;
    }
    return out;
}

std::vector<double> relu_backward(std::span<const double> pre_activation,
                                  std::span<const double> upstream) {
    if (pre_activation.size() != upstream.size()) {
        throw ValidationError("relu_backward: size mismatch");
    }
    std::vector<double> dz(upstream.size());
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        dz[i] = pre_activation[i] > 0.0 ? upstream[i] : 0.0;
    }
    return dz;
}

std::vector<double> dropout_mask(std::size_t len, double rate, RngState& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ValidationError("dropout_mask: rate must be in [0,1), got " +
                              std::to_string(rate));
    }
    std::vector<double> mask(len, 1.0);
    if (rate == 0.0) {
        return mask;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < len; ++i) {
        mask[i] = rng.next_unit() < rate ? 0.0 : keep_scale;
    }
    return mask;
}

} // namespace moemos
