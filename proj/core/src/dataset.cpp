// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moemos/errors.hpp"
#include "moemos/rng.hpp"

namespace moemos::data {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_known_keys(const json& obj, const std::set<std::string>& known,
                      const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.contains(key)) {
            throw ValidationError(where + ": unknown key '" + key + "'");
        }
    }
}

void validate_sample(const Sample& s, std::size_t dim) {
    if (s.utt_id.empty()) throw ValidationError("sample has empty utt_id");
    if (s.system_id.empty()) {
        throw ValidationError("sample " + s.utt_id + " has empty system_id");
    }
    if (s.embedding.size() != dim) {
        throw ValidationError("sample " + s.utt_id + " embedding length " +
                              std::to_string(s.embedding.size()) +
                              " does not match dataset dim " + std::to_string(dim));
    }
    for (double v : s.embedding) {
        if (!std::isfinite(v)) {
            throw ValidationError("sample " + s.utt_id + " has a non-finite embedding value");
        }
    }
    if (s.mos && (!std::isfinite(*s.mos) || *s.mos < 1.0 || *s.mos > 5.0)) {
        throw ValidationError("sample " + s.utt_id + " mos outside [1,5]");
    }
}

std::vector<std::string> build_vocab(const std::vector<Sample>& samples) {
    std::set<std::string> ids;
    for (const auto& s : samples) ids.insert(s.system_id);
    return {ids.begin(), ids.end()};
}

void write_u32(std::ostream& o, std::uint32_t v) {
    std::array<unsigned char, 4> b;
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b.data()), b.size());
}

void write_u64(std::ostream& o, std::uint64_t v) {
    std::array<unsigned char, 8> b;
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b.data()), b.size());
}

void write_f32(std::ostream& o, float v) {
    write_u32(o, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    std::array<unsigned char, 4> b;
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
        throw PipelineError("truncated embedding file while reading " + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& what) {
    std::array<unsigned char, 8> b;
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
        throw PipelineError("truncated embedding file while reading " + what);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

constexpr char kMagic[4] = {'M', 'O', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

} // namespace

Dataset::Dataset(std::vector<Sample> samples, std::size_t dim)
    : Dataset(std::move(samples), dim, {}) {
    system_vocab_ = build_vocab(samples_);
}

Dataset::Dataset(std::vector<Sample> samples, std::size_t dim,
                 std::vector<std::string> system_vocab)
    : samples_(std::move(samples)), dim_(dim), system_vocab_(std::move(system_vocab)) {
    if (dim_ == 0) throw ValidationError("dataset dim must be positive");
    for (const auto& s : samples_) validate_sample(s, dim_);
    if (!system_vocab_.empty()) {
        for (const auto& s : samples_) {
            if (std::find(system_vocab_.begin(), system_vocab_.end(), s.system_id) ==
                system_vocab_.end()) {
                throw ValidationError("system_id " + s.system_id +
                                      " missing from the inherited vocabulary");
            }
        }
    }
}

std::size_t Dataset::class_index(const std::string& system_id) const {
    auto it = std::find(system_vocab_.begin(), system_vocab_.end(), system_id);
    if (it == system_vocab_.end()) {
        throw ValidationError("unknown system_id " + system_id);
    }
    return static_cast<std::size_t>(it - system_vocab_.begin());
}

std::vector<double> pool_features(const std::vector<std::vector<double>>& frames) {
    if (frames.empty()) throw ValidationError("cannot pool zero frames");
    const std::size_t dim = frames.front().size();
    if (dim == 0) throw ValidationError("cannot pool zero-dim frames");
    std::vector<double> out(dim, 0.0);
    for (const auto& f : frames) {
        if (f.size() != dim) throw ValidationError("inconsistent frame dimensions");
        for (std::size_t i = 0; i < dim; ++i) out[i] += f[i];
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (double& v : out) v *= inv;
    return out;
}

Dataset load_manifest(const std::filesystem::path& path, bool require_labels) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open manifest " + path.string());
    const auto dir = path.parent_path();

    std::map<std::string, std::vector<std::vector<double>>> embedding_cache;
    std::vector<Sample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(where + ": invalid JSON (" + e.what() + ")");
        }
        if (!j.is_object()) throw ValidationError(where + ": line is not a JSON object");
        check_known_keys(j, {"utt_id", "system_id", "mos", "rater_scores",
                             "embedding", "embedding_ref"}, where);

        Sample s;
        if (!j.contains("utt_id") || !j["utt_id"].is_string()) {
            throw ValidationError(where + ": missing string field utt_id");
        }
        s.utt_id = j["utt_id"].get<std::string>();
        if (!j.contains("system_id") || !j["system_id"].is_string()) {
            throw ValidationError(where + ": missing string field system_id");
        }
        s.system_id = j["system_id"].get<std::string>();

        if (j.contains("mos")) {
            if (!j["mos"].is_number()) throw ValidationError(where + ": mos must be a number");
            s.mos = j["mos"].get<double>();
        } else if (require_labels) {
            throw ValidationError(where + ": mos label required but missing");
        }

        if (j.contains("rater_scores")) {
            if (!j["rater_scores"].is_array()) {
                throw ValidationError(where + ": rater_scores must be an array");
            }
            for (const auto& rs : j["rater_scores"]) {
                if (!rs.is_array() || rs.size() != 2 || !rs[0].is_string() ||
                    !rs[1].is_number()) {
                    throw ValidationError(where + ": rater_scores entries must be [id, score]");
                }
                s.rater_scores.emplace_back(rs[0].get<std::string>(), rs[1].get<double>());
            }
        }

        const bool has_inline = j.contains("embedding");
        const bool has_ref = j.contains("embedding_ref");
        if (has_inline == has_ref) {
            throw ValidationError(where + ": exactly one of embedding or embedding_ref required");
        }
        if (has_inline) {
            const auto& e = j["embedding"];
            if (!e.is_array() || e.empty()) {
                throw ValidationError(where + ": embedding must be a nonempty array");
            }
            if (e.front().is_array()) {
                std::vector<std::vector<double>> frames;
                for (const auto& row : e) {
                    if (!row.is_array()) {
                        throw ValidationError(where + ": embedding frames must all be arrays");
                    }
                    frames.push_back(row.get<std::vector<double>>());
                }
                s.embedding = pool_features(frames);
            } else {
                s.embedding = e.get<std::vector<double>>();
            }
        } else {
            const auto& ref = j["embedding_ref"];
            if (!ref.is_object()) throw ValidationError(where + ": embedding_ref must be an object");
            check_known_keys(ref, {"path", "row_index"}, where + ": embedding_ref");
            if (!ref.contains("path") || !ref["path"].is_string() ||
                !ref.contains("row_index") || !ref["row_index"].is_number_unsigned()) {
                throw ValidationError(where + ": embedding_ref needs path and row_index");
            }
            const std::string rel = ref["path"].get<std::string>();
            const auto row = ref["row_index"].get<std::size_t>();
            auto it = embedding_cache.find(rel);
            if (it == embedding_cache.end()) {
                it = embedding_cache.emplace(rel, read_embedding_file(dir / rel)).first;
            }
            if (row >= it->second.size()) {
                throw ValidationError(where + ": row_index " + std::to_string(row) +
                                      " out of range for " + rel);
            }
            s.embedding = it->second[row];
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw ValidationError("manifest " + path.string() + " has no samples");
    return Dataset(std::move(samples), samples.front().embedding.size());
}

void save_manifest(const Dataset& dataset, const std::filesystem::path& manifest_path,
                   const SaveOptions& options) {
    const auto dir = manifest_path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);

    if (!options.inline_embeddings) {
        std::vector<std::vector<double>> rows;
        rows.reserve(dataset.size());
        for (const auto& s : dataset.samples()) rows.push_back(s.embedding);
        write_embedding_file(dir / options.embeddings_filename, rows);
    }

    std::ofstream out(manifest_path);
    if (!out) throw PipelineError("cannot write manifest " + manifest_path.string());
    std::size_t row = 0;
    for (const auto& s : dataset.samples()) {
        ordered_json j;
        j["utt_id"] = s.utt_id;
        j["system_id"] = s.system_id;
        if (s.mos) j["mos"] = *s.mos;
        if (!s.rater_scores.empty()) {
            auto arr = ordered_json::array();
            for (const auto& [id, score] : s.rater_scores) {
                arr.push_back(ordered_json::array({id, score}));
            }
            j["rater_scores"] = arr;
        }
        if (options.inline_embeddings) {
            j["embedding"] = s.embedding;
        } else {
            j["embedding_ref"] = {{"path", options.embeddings_filename}, {"row_index", row}};
        }
        out << j.dump() << '\n';
        ++row;
    }
    if (!out) throw PipelineError("failed writing manifest " + manifest_path.string());
}

void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ValidationError("refusing to write an empty embedding file");
    const std::size_t dim = rows.front().size();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot write embedding file " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(dim));
    write_u64(out, rows.size());
    for (const auto& r : rows) {
        if (r.size() != dim) throw ValidationError("inconsistent embedding row dimensions");
        for (double v : r) write_f32(out, static_cast<float>(v));
    }
    if (!out) throw PipelineError("failed writing embedding file " + path.string());
}

std::vector<std::vector<double>> read_embedding_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open embedding file " + path.string());
    char magic[4];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, 4) != 0) {
        throw PipelineError(path.string() + " is not an embedding file (bad magic)");
    }
    const auto version = read_u32(in, "version");
    if (version != kVersion) {
        throw PipelineError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const auto dim = read_u32(in, "dim");
    const auto rows = read_u64(in, "row count");
    if (dim == 0) throw PipelineError(path.string() + ": zero dim");
    std::vector<std::vector<double>> out;
    out.reserve(rows);
    for (std::uint64_t r = 0; r < rows; ++r) {
        std::vector<double> row(dim);
        for (std::uint32_t c = 0; c < dim; ++c) {
            row[c] = static_cast<double>(std::bit_cast<float>(read_u32(in, "values")));
        }
        out.push_back(std::move(row));
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw PipelineError(path.string() + ": trailing bytes after declared rows");
    }
    return out;
}

Normalizer fit_normalizer(const Dataset& train) {
    if (train.empty()) throw ValidationError("cannot fit a normalizer on an empty dataset");
    const std::size_t dim = train.dim();
    Normalizer n;
    n.mean.assign(dim, 0.0);
    n.scale.assign(dim, 0.0);
    const double inv = 1.0 / static_cast<double>(train.size());
    for (const auto& s : train.samples()) {
        for (std::size_t i = 0; i < dim; ++i) n.mean[i] += s.embedding[i];
    }
    for (double& v : n.mean) v *= inv;
    for (const auto& s : train.samples()) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = s.embedding[i] - n.mean[i];
            n.scale[i] += d * d;
        }
    }
    for (double& v : n.scale) {
        v = std::sqrt(v * inv);
        if (v < 1e-12) v = 1.0;
    }
    return n;
}

std::vector<double> apply_normalizer(const Normalizer& n, const std::vector<double>& x) {
    if (x.size() != n.mean.size() || n.mean.size() != n.scale.size()) {
        throw ValidationError("normalizer dimension mismatch");
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - n.mean[i]) / n.scale[i];
    return out;
}

Dataset apply_normalizer(const Normalizer& n, const Dataset& d) {
    std::vector<Sample> samples = d.samples();
    for (auto& s : samples) s.embedding = apply_normalizer(n, s.embedding);
    return Dataset(std::move(samples), d.dim(), d.system_vocab());
}

SplitIndices split_indices(const Dataset& d, const SplitFractions& fractions,
                           std::uint64_t seed) {
    if (fractions.train <= 0 || fractions.val <= 0 || fractions.test <= 0) {
        throw ValidationError("split fractions must be positive");
    }
    const double sum = fractions.train + fractions.val + fractions.test;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1");
    }
    if (d.empty()) throw ValidationError("cannot split an empty dataset");

    std::map<std::string, std::vector<std::size_t>> by_system;
    for (std::size_t i = 0; i < d.size(); ++i) {
        by_system[d.samples()[i].system_id].push_back(i);
    }

    SplitIndices out;
    const RngState base(seed);
    std::size_t system_no = 0;
    for (auto& [system_id, idx] : by_system) {
        RngState rng = base.split(system_no++);
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
            std::swap(idx[i - 1], idx[j]);
        }
        const std::size_t n = idx.size();
        std::size_t n_train = static_cast<std::size_t>(fractions.train * static_cast<double>(n));
        const std::size_t n_val = static_cast<std::size_t>(fractions.val * static_cast<double>(n));
        const std::size_t n_test = static_cast<std::size_t>(fractions.test * static_cast<double>(n));
        n_train += n - (n_train + n_val + n_test); // remainder to train
        std::size_t p = 0;
        for (std::size_t i = 0; i < n_train; ++i) out.train.push_back(idx[p++]);
        for (std::size_t i = 0; i < n_val; ++i) out.val.push_back(idx[p++]);
        for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(idx[p++]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
    std::vector<Sample> samples;
    samples.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= d.size()) throw ValidationError("subset index out of range");
        samples.push_back(d.samples()[i]);
    }
    return Dataset(std::move(samples), d.dim(), d.system_vocab());
}

Dataset with_vocab(const Dataset& d, std::vector<std::string> vocab) {
    return Dataset(d.samples(), d.dim(), std::move(vocab));
}

SplitResult split_dataset(const Dataset& d, const SplitFractions& fractions,
                          std::uint64_t seed) {
    const SplitIndices idx = split_indices(d, fractions, seed);
    return SplitResult{subset(d, idx.train), subset(d, idx.val), subset(d, idx.test)};
}

} // namespace moemos::data
