// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/loss.hpp"

#include <algorithm>
#include <cmath>

#include "moemos/errors.hpp"
#include "moemos/kernels.hpp"

namespace moemos::loss {
namespace {

// x log x with the 0 log 0 = 0 convention; entropy terms only.
double xlogx(double x) {
    return x > 0.0 ? x * std::log(x) : 0.0;
}

// log with a floor so regularizer gradients stay finite if a gate weight
// underflows to 0.
double safe_log(double x) {
    return std::log(std::max(x, 1e-300));
}

double huber(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double huber_grad(double d) {
    if (d >= 1.0) return 1.0;
    if (d <= -1.0) return -1.0;
    return d;
}

} // namespace

void LossWeights::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || lambda1 < 0 || lambda2 < 0) {
        throw ValidationError("loss weights must be nonnegative");
    }
    if (epsilon < 0 || epsilon >= 1) {
        throw ValidationError("label smoothing epsilon must lie in [0,1)");
    }
}

double smooth_l1(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ValidationError("smooth_l1: length mismatch");
    }
    if (pred.empty()) throw ValidationError("smooth_l1: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        acc += huber(pred[i] - target[i]);
    }
    return acc / static_cast<double>(pred.size());
}

double ce_label_smoothed(const std::vector<std::vector<double>>& logits,
                         const std::vector<std::size_t>& labels, double eps) {
    if (logits.size() != labels.size()) {
        throw ValidationError("ce_label_smoothed: batch size mismatch");
    }
    if (logits.empty()) throw ValidationError("ce_label_smoothed: empty batch");
    if (eps < 0 || eps >= 1) {
        throw ValidationError("ce_label_smoothed: eps must lie in [0,1)");
    }
    const std::size_t c = logits.front().size();
    double acc = 0.0;
    for (std::size_t b = 0; b < logits.size(); ++b) {
        if (logits[b].size() != c) {
            throw ValidationError("ce_label_smoothed: ragged logits");
        }
        if (labels[b] >= c) {
            throw ValidationError("ce_label_smoothed: label " + std::to_string(labels[b]) +
                                  " out of range for " + std::to_string(c) + " classes");
        }
        const auto p = softmax(logits[b]);
        double sample = 0.0;
        const double base = eps / static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
            const double target = base + (j == labels[b] ? 1.0 - eps : 0.0);
            sample -= target * safe_log(p[j]);
        }
        acc += sample;
    }
    return acc / static_cast<double>(logits.size());
}

GateRegularizers gate_regularizers(const std::vector<std::vector<double>>& gates) {
    if (gates.empty()) throw ValidationError("gate_regularizers: empty batch");
    const std::size_t n = gates.front().size();
    if (n == 0) throw ValidationError("gate_regularizers: empty gate rows");
    std::vector<double> mean(n, 0.0);
    double entropy_sum = 0.0;
    for (const auto& g : gates) {
        if (g.size() != n) throw ValidationError("gate_regularizers: ragged rows");
        double sum = 0.0;
        double h = 0.0;
        for (double v : g) {
            if (v < 0.0) throw ValidationError("gate_regularizers: negative gate weight");
            sum += v;
            h -= xlogx(v);
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ValidationError("gate_regularizers: row does not sum to 1");
        }
        entropy_sum += h;
        for (std::size_t i = 0; i < n; ++i) mean[i] += g[i];
    }
    const double inv_b = 1.0 / static_cast<double>(gates.size());
    GateRegularizers r;
    r.sparsity = entropy_sum * inv_b;
    double mean_entropy = 0.0;
    for (double& v : mean) {
        v *= inv_b;
        mean_entropy -= xlogx(v);
    }
    r.diversity = -mean_entropy;
    return r;
}

LossBreakdown total_loss(const std::vector<model::ForwardOutput>& fwd,
                         std::span<const double> mos_targets,
                         const std::vector<std::size_t>& class_targets,
                         const LossWeights& w, PerSampleGrads* grads) {
    w.validate();
    const std::size_t b = fwd.size();
    if (b == 0) throw ValidationError("total_loss: empty batch");
    if (mos_targets.size() != b || class_targets.size() != b) {
        throw ValidationError("total_loss: target batch size mismatch");
    }
    std::vector<double> preds(b);
    std::vector<std::vector<double>> logits(b);
    std::vector<std::vector<double>> gates(b);
    for (std::size_t i = 0; i < b; ++i) {
        preds[i] = fwd[i].mos_pred;
        logits[i] = fwd[i].class_logits;
        gates[i] = fwd[i].gate_weights;
    }

    LossBreakdown out;
    out.mos = smooth_l1(preds, mos_targets);
    out.classification = ce_label_smoothed(logits, class_targets, w.epsilon);
    const auto reg = gate_regularizers(gates);
    out.diversity = reg.diversity;
    out.sparsity = reg.sparsity;
    out.total = w.alpha * out.mos + w.beta * out.classification +
                w.gamma * (w.lambda1 * out.diversity + w.lambda2 * out.sparsity);

    if (grads) {
        const double inv_b = 1.0 / static_cast<double>(b);
        const std::size_t c = logits.front().size();
        const std::size_t n = gates.front().size();
        std::vector<double> mean_gate(n, 0.0);
        for (const auto& g : gates) {
            for (std::size_t j = 0; j < n; ++j) mean_gate[j] += g[j];
        }
        for (double& v : mean_gate) v *= inv_b;

        grads->d_mos.assign(b, 0.0);
        grads->d_logits.assign(b, std::vector<double>(c, 0.0));
        grads->d_gate.assign(b, std::vector<double>(n, 0.0));
        const double base = w.epsilon / static_cast<double>(c);
        for (std::size_t i = 0; i < b; ++i) {
            grads->d_mos[i] = w.alpha * huber_grad(preds[i] - mos_targets[i]) * inv_b;
            const auto p = softmax(logits[i]);
            for (std::size_t j = 0; j < c; ++j) {
                const double target = base + (j == class_targets[i] ? 1.0 - w.epsilon : 0.0);
                grads->d_logits[i][j] = w.beta * (p[j] - target) * inv_b;
            }
            for (std::size_t j = 0; j < n; ++j) {
                const double d_div = (safe_log(mean_gate[j]) + 1.0) * inv_b;
                const double d_sp = -(safe_log(gates[i][j]) + 1.0) * inv_b;
                grads->d_gate[i][j] =
                    w.gamma * (w.lambda1 * d_div + w.lambda2 * d_sp);
            }
        }
    }
    return out;
}

std::pair<double, double> task_weight_schedule(int stage, std::size_t epoch,
                                               std::size_t epochs_in_stage) {
    if (stage < 1 || stage > 3) {
        throw ValidationError("task_weight_schedule: stage must be 1, 2 or 3");
    }
    if (epoch >= epochs_in_stage) {
        throw ValidationError("task_weight_schedule: epoch out of range");
    }
    switch (stage) {
        case 1:
            return {0.0, 1.0};
        case 2: {
            if (epochs_in_stage == 1) return {0.3, 0.7};
            const double f = static_cast<double>(epoch) /
                             static_cast<double>(epochs_in_stage - 1);
            return {std::lerp(0.3, 0.7, f), std::lerp(0.7, 0.3, f)};
        }
        default:
            return {0.9, 0.1};
    }
}

} // namespace moemos::loss
