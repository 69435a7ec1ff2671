// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace moemos::data {

/// One utterance: a pooled embedding plus labels. Frame-level inputs are
/// mean-pooled at load time, so `embedding` always has the dataset dimension.
struct Sample {
    std::string utt_id;
    std::string system_id;
    std::optional<double> mos; // in [1,5] when present
    std::vector<std::pair<std::string, double>> rater_scores;
    std::vector<double> embedding;
};

class Dataset {
public:
    Dataset() = default;

    /// Builds the system vocabulary from the samples (lexicographic).
    Dataset(std::vector<Sample> samples, std::size_t dim);

    /// Keeps an inherited vocabulary (used by splits so class indices stay
    /// stable across train/val/test). The vocabulary must cover every sample.
    Dataset(std::vector<Sample> samples, std::size_t dim,
            std::vector<std::string> system_vocab);

    const std::vector<Sample>& samples() const { return samples_; }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& system_vocab() const { return system_vocab_; }

    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    /// Index of system_id in the vocabulary; this is the classification label.
    std::size_t class_index(const std::string& system_id) const;

private:
    std::vector<Sample> samples_;
    std::size_t dim_ = 0;
    std::vector<std::string> system_vocab_;
};

/// Mean over T frame vectors. T must be >= 1.
std::vector<double> pool_features(const std::vector<std::vector<double>>& frames);

/// Manifest: one JSON object per line (see README for the schema). Embeddings
/// are either inline arrays (a vector, or a TxD array of frames that gets
/// mean-pooled) or {path, row_index} references into a binary embedding file.
Dataset load_manifest(const std::filesystem::path& path, bool require_labels);

struct SaveOptions {
    bool inline_embeddings = false;
    // Relative to the manifest's directory when not inline.
    std::string embeddings_filename = "embeddings.bin";
};

void save_manifest(const Dataset& dataset, const std::filesystem::path& manifest_path,
                   const SaveOptions& options = {});

/// Binary embedding file: magic "MOEB", u32 version (=1), u32 dim, u64 rows,
/// then rows of dim little-endian f32 (widened to f64 on load).
void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> read_embedding_file(const std::filesystem::path& path);

/// Per-dimension affine transform x -> (x - mean) / scale.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> scale; // strictly positive
};

/// Population mean/std over the training embeddings; dimensions with
/// std < 1e-12 get scale 1.
Normalizer fit_normalizer(const Dataset& train);
Dataset apply_normalizer(const Normalizer& n, const Dataset& d);
std::vector<double> apply_normalizer(const Normalizer& n, const std::vector<double>& x);

struct SplitFractions {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Deterministic stratified partition: each system's samples are shuffled
/// with a per-system substream and divided per the fractions, remainder to
/// train. Indices within each part are ascending.
SplitIndices split_indices(const Dataset& d, const SplitFractions& fractions,
                           std::uint64_t seed);

/// Materializes split_indices; all three parts inherit the full vocabulary.
SplitResult split_dataset(const Dataset& d, const SplitFractions& fractions,
                          std::uint64_t seed);

/// New dataset from the given sample indices, keeping d's vocabulary.
Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices);

/// Same samples, vocabulary replaced (must cover every sample).
Dataset with_vocab(const Dataset& d, std::vector<std::string> vocab);

} // namespace moemos::data
