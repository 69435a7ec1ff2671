// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moemos/dataset.hpp"
#include "moemos/model.hpp"

namespace moemos::metrics {

/// Correlations are nullopt when undefined (a constant input vector); they are
/// rendered as "n/a" and serialized as JSON null, never as 0.
struct MetricsReport {
    std::string level; // "utterance" or "system"
    double mse = 0.0;
    std::optional<double> lcc;
    std::optional<double> srcc;
    std::optional<double> ktau;
    std::size_t n = 0;
};

double mse(std::span<const double> pred, std::span<const double> truth);

/// 1-based ranks, ties averaged.
std::vector<double> average_ranks(std::span<const double> v);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Tau-b via the O(n log n) merge-sort formulation. Must agree exactly with
/// brute-force pair enumeration; the counts are exact integers.
std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y);

MetricsReport utterance_metrics(std::span<const double> pred,
                                std::span<const double> truth);

/// Per-system means of pred and truth first, then utterance_metrics on those.
MetricsReport system_metrics(std::span<const double> pred,
                             std::span<const double> truth,
                             const std::vector<std::string>& system_ids);

/// Competition ("1224") ranking: ties share the best rank of the group.
std::vector<std::size_t> competition_rank(std::span<const double> values,
                                          bool higher_is_better);

struct EvalResult {
    MetricsReport utterance;
    MetricsReport system;
    double accuracy = 0.0;
};
EvalResult evaluate_model(const model::MoeModel& m, const data::Dataset& d);

struct RankEntry {
    std::string name;
    MetricsReport report;
};

/// Aligned text table: raw MSE/LCC/SRCC/KTAU at 3 decimals (round-half-even)
/// plus the four competition-rank columns (MSE ascending, others descending).
/// Undefined raw values print "n/a" and are excluded from that rank column.
std::string render_rank_table(const std::vector<RankEntry>& entries,
                              const std::string& level);

/// Fixed 3-decimal rendering with round-half-even on the printed decimals.
std::string format_fixed3(double v);

std::string eval_result_to_json(const EvalResult& r, const std::string& name);
void write_eval_result(const std::filesystem::path& path, const EvalResult& r,
                       const std::string& name);
struct NamedReports {
    std::string name;
    MetricsReport utterance;
    MetricsReport system;
};
NamedReports read_eval_result(const std::filesystem::path& path);

} // namespace moemos::metrics
