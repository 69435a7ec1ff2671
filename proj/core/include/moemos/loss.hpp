// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "moemos/model.hpp"

namespace moemos::loss {

struct LossWeights {
    double alpha = 1.0;   // MOS task
    double beta = 1.0;    // classification task
    double gamma = 0.01;  // regularization block
    double lambda1 = 1.0; // diversity
    double lambda2 = 1.0; // sparsity
    double epsilon = 0.1; // label smoothing

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double mos = 0.0;
    double classification = 0.0;
    double diversity = 0.0;
    double sparsity = 0.0;
};

/// Mean over pairs of 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
double smooth_l1(std::span<const double> pred, std::span<const double> target);

/// Mean over the batch of -sum_j smooth_j log softmax(logits)_j with
/// smooth = (1 - eps) * onehot + eps / C.
double ce_label_smoothed(const std::vector<std::vector<double>>& logits,
                         const std::vector<std::size_t>& labels, double eps);

struct GateRegularizers {
    double diversity = 0.0; // -H(mean gate), in [-ln N, 0]
    double sparsity = 0.0;  // mean per-row entropy, in [0, ln N]
};
GateRegularizers gate_regularizers(const std::vector<std::vector<double>>& gates);

/// Gradients of the total loss w.r.t. each sample's raw outputs; feed these to
/// MoeModel::backward.
struct PerSampleGrads {
    std::vector<double> d_mos;
    std::vector<std::vector<double>> d_logits;
    std::vector<std::vector<double>> d_gate;
};

/// Composes the weighted terms. mos_pred is used unclamped (train-mode
/// outputs). When grads is non-null it is filled per sample.
LossBreakdown total_loss(const std::vector<model::ForwardOutput>& fwd,
                         std::span<const double> mos_targets,
                         const std::vector<std::size_t>& class_targets,
                         const LossWeights& w, PerSampleGrads* grads = nullptr);

/// Stage 1: (0,1). Stage 2: linear (0.3,0.7) -> (0.7,0.3) across the stage,
/// pinned at (0.3,0.7) for a single-epoch stage. Stage 3: (0.9,0.1).
std::pair<double, double> task_weight_schedule(int stage, std::size_t epoch,
                                               std::size_t epochs_in_stage);

} // namespace moemos::loss
