// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "moemos/dataset.hpp"
#include "moemos/loss.hpp"
#include "moemos/model.hpp"
#include "moemos/synth.hpp"
#include "moemos/train.hpp"

namespace moemos::config {

struct RunConfig {
    std::uint64_t seed = 1234;
    synth::SynthConfig synth;
    model::MoeConfig model;
    loss::LossWeights loss;
    std::array<train::StageConfig, 3> stages = {
        train::StageConfig{1, 12, 1e-4, 2, "train"},
        train::StageConfig{2, 15, 5e-5, 2, "train"},
        train::StageConfig{3, 10, 1e-5, 2, "train"},
    };
    data::SplitFractions split;
    std::string data_dir = "data";
    std::string out_dir = "run";

    void validate() const;
};

/// JSON with // comments allowed. Unknown keys anywhere are rejected. Every
/// field is optional and falls back to the defaults above.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// Full round-trippable dump (no comments), used by the run summary.
std::string run_config_to_json(const RunConfig& c);

} // namespace moemos::config
