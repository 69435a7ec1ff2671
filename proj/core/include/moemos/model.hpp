// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moemos/rng.hpp"
#include "moemos/tensor.hpp"

namespace moemos::model {

/// kTrain enables dropout; kEval clamps mos_pred to [1,5]; kGradCheck does
/// neither, so finite differences see a smooth function.
enum class Mode { kTrain, kEval, kGradCheck };

struct MoeConfig {
    std::size_t n_experts = 4;
    std::size_t input_dim = 64;
    std::vector<std::size_t> expert_hidden = {256, 128}; // length 2 or 3
    std::size_t expert_out_dim = 64;
    double dropout_rate = 0.1;
    std::size_t n_classes = 4;
    std::size_t gate_hidden = 0; // 0 keeps the gate a single affine + softmax

    void validate() const; // throws ValidationError
};

struct ForwardOutput {
    double mos_pred = 0.0;
    std::vector<double> class_logits;
    std::vector<double> gate_weights;
    std::vector<double> mixed_repr;
};

/// Everything backward() needs; filled by forward() when a trace is passed.
struct ForwardTrace {
    std::vector<double> input;
    std::vector<double> gate_hidden_pre;
    std::vector<double> gate_hidden_act;
    std::vector<double> gate_pre;
    std::vector<double> gate_weights;
    // Per expert: pre-activation and post-dropout activation per hidden layer,
    // the dropout masks (empty rows outside train mode), and the final output.
    std::vector<std::vector<std::vector<double>>> expert_pre;
    std::vector<std::vector<std::vector<double>>> expert_act;
    std::vector<std::vector<std::vector<double>>> expert_mask;
    std::vector<std::vector<double>> expert_out;
    std::vector<double> mixed_repr;
    double mos_raw = 0.0;
    std::vector<double> class_logits;
};

/// Per-sample upstream gradients handed to backward() by the loss.
struct BackwardSignal {
    double d_mos = 0.0;
    std::vector<double> d_logits;
    std::vector<double> d_gate; // direct term from the gate regularizers
};

class MoeModel {
public:
    MoeModel() = default;

    /// Xavier-uniform weights, zero biases. Each block (gate, every expert,
    /// heads) draws from its own substream so experts start distinct.
    static MoeModel init(const MoeConfig& cfg, const RngState& rng);

    const MoeConfig& config() const { return cfg_; }

    std::vector<double> gate_forward(std::span<const double> x) const;
    std::vector<double> expert_forward(std::size_t i, std::span<const double> x,
                                       Mode mode, RngState& rng) const;
    ForwardOutput forward(std::span<const double> x, Mode mode, RngState& rng,
                          ForwardTrace* trace = nullptr) const;

    /// Accumulates parameter gradients for one sample.
    void backward(const ForwardTrace& trace, const BackwardSignal& up);

    /// Fixed order: gate, experts ascending (layer weights then bias), mos
    /// head, cls head. The checkpoint writes tensors in exactly this order.
    std::vector<ParamTensor*> parameters();
    std::vector<const ParamTensor*> parameters() const;
    void zero_grad();

    void save(const std::filesystem::path& path) const;
    static MoeModel load(const std::filesystem::path& path);

private:
    MoeConfig cfg_;
    ParamTensor gate_h_w_, gate_h_b_; // present only when gate_hidden > 0
    ParamTensor gate_w_, gate_b_;
    // experts_[i] holds the affine pairs (W, b) for expert i, input to output.
    std::vector<std::vector<ParamTensor>> experts_;
    ParamTensor mos_w_, mos_b_;
    ParamTensor cls_w_, cls_b_;

    std::vector<double> expert_forward_traced(std::size_t i, std::span<const double> x,
                                              Mode mode, RngState& rng,
                                              ForwardTrace* trace) const;
};

/// Column means of the gate batch and how often each expert holds the argmax
/// (ties go to the lowest index).
struct Utilization {
    std::vector<double> mean_weight;
    std::vector<double> argmax_frequency;
};
Utilization expert_utilization(const std::vector<std::vector<double>>& gates);

} // namespace moemos::model
