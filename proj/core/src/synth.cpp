// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moemos/errors.hpp"

namespace moemos::synth {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// RNG substream ids, disjoint from the per-system streams 0..K-1.
constexpr std::uint64_t kBiasStream = 1000;
constexpr std::uint64_t kTrainAssignStream = 2000;
constexpr std::uint64_t kTestAssignStream = 3000;

// Raters specialize: a pool of P raters is laid out on an a x b grid over the
// (quality residual, style) plane, both axes z-scored, and each utterance
// draws its raters with Gaussian affinity to its own coordinates. Each pool
// therefore stamps a smooth bias surface over that plane onto the labels it
// produces. The surface is identical across systems (both coordinates are
// N(0,1) within every system), so system-level means move together and
// system ranking survives a pool change, while utterance-level ordering
// inside every system follows the surface and does not transfer to the
// disjoint pool. That asymmetry is what makes rater-shifted evaluation
// measurably harder at the utterance level only.
constexpr double kAffinityFloor = 0.02;
constexpr double kLocationSpan = 2.5;
constexpr double kMinBandwidth = 0.1;

double rater_location(std::size_t slot, std::size_t axis_size) {
    return kLocationSpan *
           (2.0 * (static_cast<double>(slot) + 0.5) / static_cast<double>(axis_size) - 1.0);
}

// Half the spacing between adjacent rater locations, so each rater covers its
// own band with modest overlap regardless of the axis size. A single-slot
// axis gets the full span, which makes the affinity flat along that axis.
double rater_bandwidth(std::size_t axis_size) {
    return std::max(kLocationSpan / static_cast<double>(axis_size), kMinBandwidth);
}

// Largest factor pair a*b = P, returned as {quality bands, style bands} with
// the larger factor on the quality axis. Prime pools degrade to a single
// style band, i.e. a pure quality-band pool.
std::pair<std::size_t, std::size_t> rater_grid(std::size_t pool_size) {
    auto a = static_cast<std::size_t>(std::sqrt(static_cast<double>(pool_size)));
    while (pool_size % a != 0) --a;
    return {pool_size / a, a};
}

std::string rater_id(std::size_t index) {
    std::ostringstream s;
    s << "r" << (index < 10 ? "0" : "") << index;
    return s.str();
}

std::string system_id(std::size_t index) {
    std::ostringstream s;
    s << "sys" << (index < 10 ? "0" : "") << index;
    return s.str();
}

std::string utt_id(std::size_t index) {
    std::ostringstream s;
    s << "u";
    std::string digits = std::to_string(index);
    s << std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') << digits;
    return s.str();
}

double clamp_mos(double v) {
    return std::clamp(v, 1.0, 5.0);
}

} // namespace

void SynthConfig::validate() const {
    if (n_systems < 2) throw ValidationError("n_systems must be at least 2");
    if (dim < n_systems) {
        throw ValidationError("dim must be at least n_systems (axis-aligned centers)");
    }
    if (per_system < 1) throw ValidationError("per_system must be positive");
    if (system_mos.size() != n_systems) {
        throw ValidationError("system_mos must list one value per system");
    }
    for (double v : system_mos) {
        if (!(v >= 1.0 && v <= 5.0)) {
            throw ValidationError("system_mos values must lie in [1,5]");
        }
    }
    if (!(cluster_sep > 0)) throw ValidationError("cluster_sep must be positive");
    if (embed_noise < 0 || utterance_noise < 0 || rater_bias_std < 0 ||
        rater_noise_std < 0) {
        throw ValidationError("noise parameters must be nonnegative");
    }
    if (n_raters_train < 1 || n_raters_test < 1) {
        throw ValidationError("both rater pools must be nonempty");
    }
    if (raters_per_utt < 1) throw ValidationError("raters_per_utt must be positive");
    if (raters_per_utt > n_raters_train || raters_per_utt > n_raters_test) {
        throw ValidationError("raters_per_utt exceeds a rater pool size");
    }
}

std::pair<data::Dataset, GroundTruth> generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    const RngState root(cfg.seed);
    std::vector<data::Sample> samples;
    GroundTruth truth;
    samples.reserve(cfg.n_systems * cfg.per_system);

    std::size_t utt = 0;
    for (std::size_t k = 0; k < cfg.n_systems; ++k) {
        RngState rng = root.split(k);
        for (std::size_t u = 0; u < cfg.per_system; ++u) {
            data::Sample s;
            s.utt_id = utt_id(utt++);
            s.system_id = system_id(k);
            s.embedding.assign(cfg.dim, 0.0);
            double last_noise = 0.0;
            double style_noise = 0.0;
            for (std::size_t d = 0; d < cfg.dim; ++d) {
                const double z = rng.next_normal();
                s.embedding[d] = cfg.embed_noise * z;
                if (d + 1 == cfg.dim) last_noise = z;
                if (d + 2 == cfg.dim) style_noise = z;
            }
            s.embedding[k] += cfg.cluster_sep;
            const double mos = clamp_mos(cfg.system_mos[k] + cfg.utterance_noise * last_noise);
            s.mos = mos;
            truth.utt_ids.push_back(s.utt_id);
            truth.true_mos.push_back(mos);
            truth.style.push_back(style_noise);
            truth.system_index.push_back(k);
            samples.push_back(std::move(s));
        }
    }

    RngState bias_rng = root.split(kBiasStream);
    for (std::size_t r = 0; r < cfg.n_raters_train + cfg.n_raters_test; ++r) {
        truth.rater_bias[rater_id(r)] = cfg.rater_bias_std * bias_rng.next_normal();
    }
    return {data::Dataset(std::move(samples), cfg.dim), std::move(truth)};
}

std::vector<std::vector<std::pair<std::string, double>>>
simulate_raters(const GroundTruth& truth, const SynthConfig& cfg, RaterPool pool) {
    const std::size_t pool_size =
        pool == RaterPool::kTrain ? cfg.n_raters_train : cfg.n_raters_test;
    const std::size_t pool_offset = pool == RaterPool::kTrain ? 0 : cfg.n_raters_train;
    if (pool_size == 0) throw ValidationError("rater pool is empty");
    if (cfg.raters_per_utt > pool_size) {
        throw ValidationError("raters_per_utt exceeds the pool size");
    }

    std::vector<double> biases(pool_size);
    for (std::size_t r = 0; r < pool_size; ++r) {
        const auto it = truth.rater_bias.find(rater_id(pool_offset + r));
        if (it == truth.rater_bias.end()) {
            throw ValidationError("ground truth is missing a rater bias");
        }
        biases[r] = it->second;
    }

    RngState rng = RngState(cfg.seed)
                       .split(pool == RaterPool::kTrain ? kTrainAssignStream
                                                        : kTestAssignStream);
    if (truth.style.size() != truth.true_mos.size()) {
        throw ValidationError("ground truth is missing style coordinates");
    }
    const auto [q_bands, s_bands] = rater_grid(pool_size);
    const double q_bw = rater_bandwidth(q_bands);
    const double s_bw = rater_bandwidth(s_bands);
    std::vector<std::vector<std::pair<std::string, double>>> out(truth.true_mos.size());
    std::vector<double> weights(pool_size);
    std::vector<bool> taken(pool_size);
    for (std::size_t u = 0; u < truth.true_mos.size(); ++u) {
        const std::size_t k = truth.system_index[u];
        if (k >= cfg.system_mos.size()) throw ValidationError("system index out of range");
        const double zq = cfg.utterance_noise > 0.0
                              ? (truth.true_mos[u] - cfg.system_mos[k]) / cfg.utterance_noise
                              : 0.0;
        const double zs = truth.style[u];
        for (std::size_t r = 0; r < pool_size; ++r) {
            const double dq = zq - rater_location(r % q_bands, q_bands);
            const double ds = zs - rater_location(r / q_bands, s_bands);
            weights[r] = std::exp(-dq * dq / (2.0 * q_bw * q_bw) -
                                  ds * ds / (2.0 * s_bw * s_bw)) +
                         kAffinityFloor;
        }
        std::fill(taken.begin(), taken.end(), false);
        for (std::size_t pick = 0; pick < cfg.raters_per_utt; ++pick) {
            double total = 0.0;
            for (std::size_t r = 0; r < pool_size; ++r) {
                if (!taken[r]) total += weights[r];
            }
            const double x = rng.next_unit() * total;
            double acc = 0.0;
            std::size_t chosen = pool_size;
            for (std::size_t r = 0; r < pool_size; ++r) {
                if (taken[r]) continue;
                acc += weights[r];
                if (x < acc) {
                    chosen = r;
                    break;
                }
            }
            if (chosen == pool_size) { // x == total from rounding; take the last free
                for (std::size_t r = pool_size; r-- > 0;) {
                    if (!taken[r]) {
                        chosen = r;
                        break;
                    }
                }
            }
            taken[chosen] = true;
            const double score = clamp_mos(truth.true_mos[u] + biases[chosen] +
                                           cfg.rater_noise_std * rng.next_normal());
            out[u].emplace_back(rater_id(pool_offset + chosen), score);
        }
    }
    return out;
}

data::Dataset apply_rater_labels(
    const data::Dataset& d,
    const std::vector<std::vector<std::pair<std::string, double>>>& scores) {
    if (scores.size() != d.size()) {
        throw ValidationError("rater scores do not match the dataset size");
    }
    std::vector<data::Sample> samples = d.samples();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (scores[i].empty()) {
            throw ValidationError("sample " + samples[i].utt_id + " has no rater scores");
        }
        double mean = 0.0;
        for (const auto& [id, score] : scores[i]) mean += score;
        samples[i].mos = mean / static_cast<double>(scores[i].size());
        samples[i].rater_scores = scores[i];
    }
    return data::Dataset(std::move(samples), d.dim(), d.system_vocab());
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& t) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write ground truth " + path.string());
    for (std::size_t i = 0; i < t.utt_ids.size(); ++i) {
        ordered_json j;
        j["utt_id"] = t.utt_ids[i];
        j["true_mos"] = t.true_mos[i];
        j["style"] = t.style[i];
        j["system_index"] = t.system_index[i];
        out << j.dump() << '\n';
    }
    for (const auto& [id, bias] : t.rater_bias) {
        ordered_json j;
        j["rater_id"] = id;
        j["bias"] = bias;
        out << j.dump() << '\n';
    }
    if (!out) throw PipelineError("failed writing ground truth " + path.string());
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open ground truth " + path.string());
    GroundTruth t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (j.contains("rater_id")) {
                t.rater_bias[j.at("rater_id").get<std::string>()] = j.at("bias").get<double>();
            } else {
                t.utt_ids.push_back(j.at("utt_id").get<std::string>());
                t.true_mos.push_back(j.at("true_mos").get<double>());
                t.style.push_back(j.at("style").get<double>());
                t.system_index.push_back(j.at("system_index").get<std::size_t>());
            }
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": invalid ground truth record (" + e.what() + ")");
        }
    }
    return t;
}

} // namespace moemos::synth
