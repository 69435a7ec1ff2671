// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "moemos/dataset.hpp"
#include "moemos/loss.hpp"
#include "moemos/model.hpp"
#include "moemos/rng.hpp"
#include "moemos/tensor.hpp"

namespace moemos::train {

struct StageConfig {
    int stage = 1; // 1, 2 or 3
    std::size_t epochs = 0;
    double lr_max = 1e-4;
    std::size_t batch_size = 2;
    std::string dataset_role = "train";

    void validate() const;
};

inline constexpr std::array<double, 3> kStageLrDefaults = {1e-4, 5e-5, 1e-5};
inline constexpr std::array<std::size_t, 3> kStageEpochDefaults = {12, 15, 10};
inline constexpr std::size_t kEarlyStopPatience = 5;

/// Decoupled weight decay, then Adam with bias correction. Moments live here;
/// construct fresh (or reset) at every stage boundary.
class AdamW {
public:
    AdamW(std::vector<ParamTensor*> params, double weight_decay = 0.01,
          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(double lr); // throws PipelineError on a NaN gradient
    void reset();
    std::uint64_t step_count() const { return step_; }

private:
    std::vector<ParamTensor*> params_;
    std::vector<std::vector<double>> m_, v_;
    double weight_decay_, beta1_, beta2_, eps_;
    std::uint64_t step_ = 0;
};

/// eta_min + 0.5 (lr_max - eta_min) (1 + cos(pi epoch / (epochs-1))) with
/// eta_min = 0.01 lr_max; a single-epoch stage returns lr_max.
double cosine_lr(double lr_max, std::size_t epoch, std::size_t epochs);

/// Strict-improvement early stopping. observe() returns true when training
/// should stop: patience consecutive non-improving observations.
struct EarlyStopper {
    std::size_t patience = kEarlyStopPatience;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    std::size_t seen = 0;
    std::size_t since_improvement = 0;

    bool observe(double val) {
        const std::size_t index = seen++;
        if (val < best) {
            best = val;
            best_index = index;
            since_improvement = 0;
            return false;
        }
        return ++since_improvement >= patience;
    }
    bool improved() const { return since_improvement == 0 && seen > 0; }
};

/// Scales all gradients by max_norm / norm when the global L2 norm exceeds
/// max_norm; returns the pre-clip norm.
double clip_gradients(const std::vector<ParamTensor*>& params, double max_norm);

struct EpochLog {
    int stage = 0;
    std::size_t epoch = 0;
    double alpha = 0.0;
    double beta = 0.0;
    loss::LossBreakdown train_loss; // epoch mean over batches
    double val_loss = 0.0;
    double lr = 0.0;
    double max_preclip_norm = 0.0;
    double max_postclip_norm = 0.0;
    model::Utilization utilization; // gate stats over the training set
};

struct StageResult {
    model::MoeModel model; // best-validation snapshot
    std::vector<EpochLog> history;
    std::size_t epochs_run = 0;
    double best_val_loss = 0.0;
    std::string stop_reason; // "completed", "early_stop" or "no_epochs"
};

/// One stage: deterministic shuffling, mini-batches, clip + AdamW with the
/// epoch's cosine lr, early stopping on validation total loss evaluated with
/// the stage's final (alpha, beta). Returns the best snapshot.
StageResult run_stage(const model::MoeModel& start, const StageConfig& cfg,
                      const data::Dataset& train_data, const data::Dataset& val_data,
                      const loss::LossWeights& base, RngState& rng);

struct PipelineResult {
    model::MoeModel model;
    std::vector<EpochLog> history; // all stages concatenated
    std::array<std::size_t, 3> epochs_run = {0, 0, 0};
    std::array<std::string, 3> stop_reasons;
};

/// Stages 1 -> 2 -> 3, model carried forward, optimizer state reset between
/// stages. All randomness derives from seed.
PipelineResult run_full_pipeline(const data::Dataset& train_data,
                                 const data::Dataset& val_data,
                                 const std::array<StageConfig, 3>& stages,
                                 const loss::LossWeights& base,
                                 const model::MoeModel& init_model,
                                 std::uint64_t seed);

/// Max relative error |a - n| / max(|a|, |n|, 1e-8) between analytic gradients
/// and central differences (step 1e-5), over >= min_params parameters sampled
/// so that every tensor is covered. Runs in kGradCheck mode.
double grad_check(model::MoeModel& m, const data::Dataset& batch,
                  const loss::LossWeights& w, std::size_t min_params = 200,
                  std::uint64_t seed = 7);

/// CSV: stage,epoch,alpha,beta,total,mos,classification,diversity,sparsity
void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochLog>& history);

} // namespace moemos::train
