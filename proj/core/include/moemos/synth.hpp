// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "moemos/dataset.hpp"
#include "moemos/rng.hpp"

namespace moemos::synth {

struct SynthConfig {
    std::size_t n_systems = 4;
    std::size_t dim = 64;
    std::size_t per_system = 200;
    std::vector<double> system_mos = {2.0, 3.0, 3.5, 4.5};
    double cluster_sep = 4.0;
    double embed_noise = 1.0;
    double utterance_noise = 0.1;
    double rater_bias_std = 0.3;
    double rater_noise_std = 0.2;
    std::size_t n_raters_train = 10;
    std::size_t n_raters_test = 10;
    std::size_t raters_per_utt = 4;
    std::uint64_t seed = 1234;

    void validate() const;
};

/// Oracle record for every generated utterance plus the fixed per-rater
/// biases (both pools, drawn once at generation time). `style` is the raw
/// N(0,1) draw behind embedding axis D-2, kept before any cluster offset so
/// it has the same distribution for every system.
struct GroundTruth {
    std::vector<std::string> utt_ids;
    std::vector<double> true_mos;
    std::vector<double> style;
    std::vector<std::size_t> system_index;
    std::map<std::string, double> rater_bias;
};

enum class RaterPool { kTrain, kTest };

/// System k's embeddings ~ N(s * e_k, sigma_e^2 I). The true MOS reuses the
/// last embedding noise axis: mos = clamp(system_mos[k] + sigma_u * z[D-1]),
/// so the utterance-level residual is (partly) decodable from the embedding
/// while staying Gaussian(0, sigma_u) marginally. Samples carry true MOS as
/// their label until rater labels are applied.
std::pair<data::Dataset, GroundTruth> generate_dataset(const SynthConfig& cfg);

/// Scores for every utterance from raters_per_utt raters of the pool:
/// score = clamp(true_mos + bias_r + N(0, sigma_r), 1, 5). Raters are not
/// assigned uniformly: each pool spreads its raters over a grid in the
/// (quality residual, style) plane and utterances draw raters with Gaussian
/// affinity to their own coordinates, so each pool stamps a smooth bias
/// fingerprint over that plane onto the labels it produces (the rater-shift
/// mechanism).
std::vector<std::vector<std::pair<std::string, double>>>
simulate_raters(const GroundTruth& truth, const SynthConfig& cfg, RaterPool pool);

/// Replaces each sample's mos with the mean of its rater scores and attaches
/// the scores. Order must match the generated dataset.
data::Dataset apply_rater_labels(
    const data::Dataset& d,
    const std::vector<std::vector<std::pair<std::string, double>>>& scores);

/// JSON-lines sidecar: one utterance record per line, then one rater-bias
/// record per rater.
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& t);
GroundTruth read_ground_truth(const std::filesystem::path& path);

} // namespace moemos::synth
