// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace moemos {

/// Dense rank-1/rank-2 parameter with a same-shaped gradient buffer.
/// Matrices are row-major with rows = output dimension.
struct ParamTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;

    static ParamTensor vector(std::string name, std::size_t n) {
        ParamTensor t;
        t.name = std::move(name);
        t.shape = {n};
        t.values.assign(n, 0.0);
        t.grad.assign(n, 0.0);
        return t;
    }

    static ParamTensor matrix(std::string name, std::size_t rows, std::size_t cols) {
        ParamTensor t;
        t.name = std::move(name);
        t.shape = {rows, cols};
        t.values.assign(rows * cols, 0.0);
        t.grad.assign(rows * cols, 0.0);
        return t;
    }

    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
    std::size_t size() const { return values.size(); }

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    void zero_grad() { grad.assign(grad.size(), 0.0); }
};

} // namespace moemos
