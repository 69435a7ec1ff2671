// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "moemos/config.hpp"
#include "moemos/dataset.hpp"
#include "moemos/metrics.hpp"
#include "moemos/model.hpp"
#include "moemos/synth.hpp"
#include "moemos/train.hpp"

namespace moemos::pipeline {

/// In-memory result of data generation. Train/val carry train-pool rater
/// labels. The test split comes in two labelings over identical embeddings:
/// same-rater (train pool) and shifted-rater (disjoint test pool).
struct DataBundle {
    data::Dataset train;
    data::Dataset val;
    data::Dataset test_same;
    data::Dataset test_shift;
    synth::GroundTruth truth;
};

DataBundle prepare_data(const synth::SynthConfig& cfg,
                        const data::SplitFractions& fractions);

/// Writes train/val/test_same/test_shift manifests (+ binary embeddings) and
/// the ground-truth sidecar into dir.
void write_data_bundle(const DataBundle& bundle, const std::filesystem::path& dir);
DataBundle load_data_bundle(const std::filesystem::path& dir);

struct TrainArtifacts {
    model::MoeModel model;
    train::PipelineResult result;
    metrics::EvalResult val_eval;
    std::filesystem::path checkpoint_path;
    std::filesystem::path log_path;
    std::filesystem::path summary_path;
};

/// Full run: load (or generate) data, train the three stages, write
/// checkpoint, training log and a JSON run summary into out_dir.
TrainArtifacts train_from_config(const config::RunConfig& cfg,
                                 const std::filesystem::path& data_dir,
                                 const std::filesystem::path& out_dir);

metrics::EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                        const std::filesystem::path& manifest);

} // namespace moemos::pipeline
