// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moemos/errors.hpp"

namespace moemos::metrics {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_pair(std::span<const double> a, std::span<const double> b,
                const char* what) {
    if (a.size() != b.size()) {
        throw ValidationError(std::string(what) + ": length mismatch " +
                              std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    if (a.size() < 2) {
        throw ValidationError(std::string(what) + ": need at least 2 pairs");
    }
    for (double v : a) {
        if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
    }
    for (double v : b) {
        if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
    }
}

/// Pairs (i, j), i < j, with y[perm[i]] > y[perm[j]], counted while merge
/// sorting perm by y. Ties are not inversions.
std::uint64_t count_inversions(std::vector<double>& y) {
    std::vector<double> tmp(y.size());
    std::uint64_t inversions = 0;
    for (std::size_t width = 1; width < y.size(); width *= 2) {
        for (std::size_t lo = 0; lo + width < y.size(); lo += 2 * width) {
            const std::size_t mid = lo + width;
            const std::size_t hi = std::min(lo + 2 * width, y.size());
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (y[j] < y[i]) {
                    inversions += mid - i;
                    tmp[k++] = y[j++];
                } else {
                    tmp[k++] = y[i++];
                }
            }
            while (i < mid) tmp[k++] = y[i++];
            while (j < hi) tmp[k++] = y[j++];
            std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo),
                      tmp.begin() + static_cast<std::ptrdiff_t>(hi),
                      y.begin() + static_cast<std::ptrdiff_t>(lo));
        }
    }
    return inversions;
}

std::uint64_t tie_pairs(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::uint64_t pairs = 0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        const std::uint64_t t = j - i;
        pairs += t * (t - 1) / 2;
        i = j;
    }
    return pairs;
}

json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> opt_from_json(const json& j, const std::string& where) {
    if (j.is_null()) return std::nullopt;
    if (!j.is_number()) throw ValidationError(where + " must be a number or null");
    return j.get<double>();
}

ordered_json report_to_json(const MetricsReport& r) {
    ordered_json j;
    j["level"] = r.level;
    j["mse"] = r.mse;
    j["lcc"] = opt_to_json(r.lcc);
    j["srcc"] = opt_to_json(r.srcc);
    j["ktau"] = opt_to_json(r.ktau);
    j["n"] = r.n;
    return j;
}

MetricsReport report_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key != "level" && key != "mse" && key != "lcc" && key != "srcc" &&
            key != "ktau" && key != "n") {
            throw ValidationError(where + ": unknown key '" + key + "'");
        }
    }
    MetricsReport r;
    r.level = j.at("level").get<std::string>();
    r.mse = j.at("mse").get<double>();
    r.lcc = opt_from_json(j.at("lcc"), where + ".lcc");
    r.srcc = opt_from_json(j.at("srcc"), where + ".srcc");
    r.ktau = opt_from_json(j.at("ktau"), where + ".ktau");
    r.n = j.at("n").get<std::size_t>();
    return r;
}

} // namespace

double mse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw ValidationError("mse: need equal nonempty vectors");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        // Tie group occupies 0-based positions [i, j); all get the average.
        const double rank = static_cast<double>(i + j - 1) / 2.0 + 1.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
        i = j;
    }
    return ranks;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "pearson");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "spearman");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "kendall_tau_b");
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });

    // Knight: after sorting by (x, y), discordant pairs are y-inversions.
    std::uint64_t n1 = 0; // pairs tied in x
    std::uint64_t n3 = 0; // pairs tied in both
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && x[order[j]] == x[order[i]]) ++j;
        const std::uint64_t t = j - i;
        n1 += t * (t - 1) / 2;
        std::size_t a = i;
        while (a < j) {
            std::size_t b = a;
            while (b < j && y[order[b]] == y[order[a]]) ++b;
            const std::uint64_t u = b - a;
            n3 += u * (u - 1) / 2;
            a = b;
        }
        i = j;
    }
    std::vector<double> ys(n);
    for (std::size_t k = 0; k < n; ++k) ys[k] = y[order[k]];
    const std::uint64_t discordant = count_inversions(ys);
    const std::uint64_t n2 = tie_pairs(std::vector<double>(y.begin(), y.end()));
    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    if (n0 == n1 || n0 == n2) return std::nullopt;

    const std::int64_t num = static_cast<std::int64_t>(n0) - static_cast<std::int64_t>(n1) -
                             static_cast<std::int64_t>(n2) + static_cast<std::int64_t>(n3) -
                             2 * static_cast<std::int64_t>(discordant);
    const double den = std::sqrt(static_cast<double>(n0 - n1)) *
                       std::sqrt(static_cast<double>(n0 - n2));
    return std::clamp(static_cast<double>(num) / den, -1.0, 1.0);
}

MetricsReport utterance_metrics(std::span<const double> pred,
                                std::span<const double> truth) {
    check_pair(pred, truth, "utterance_metrics");
    MetricsReport r;
    r.level = "utterance";
    r.n = pred.size();
    r.mse = mse(pred, truth);
    r.lcc = pearson(pred, truth);
    r.srcc = spearman(pred, truth);
    r.ktau = kendall_tau_b(pred, truth);
    return r;
}

MetricsReport system_metrics(std::span<const double> pred,
                             std::span<const double> truth,
                             const std::vector<std::string>& system_ids) {
    if (pred.size() != truth.size() || pred.size() != system_ids.size()) {
        throw ValidationError("system_metrics: length mismatch");
    }
    if (pred.empty()) throw ValidationError("system_metrics: empty input");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        auto& g = groups[system_ids[i]];
        g.first.push_back(pred[i]);
        g.second.push_back(truth[i]);
    }
    if (groups.size() < 2) {
        throw ValidationError("system_metrics: need at least 2 distinct systems");
    }
    std::vector<double> mean_pred, mean_truth;
    for (const auto& [id, g] : groups) {
        const double np = static_cast<double>(g.first.size());
        mean_pred.push_back(std::accumulate(g.first.begin(), g.first.end(), 0.0) / np);
        mean_truth.push_back(std::accumulate(g.second.begin(), g.second.end(), 0.0) / np);
    }
    MetricsReport r = utterance_metrics(mean_pred, mean_truth);
    r.level = "system";
    return r;
}

std::vector<std::size_t> competition_rank(std::span<const double> values,
                                          bool higher_is_better) {
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError("competition_rank: non-finite value");
    }
    std::vector<std::size_t> ranks(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::size_t better = 0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            if (higher_is_better ? values[j] > values[i] : values[j] < values[i]) {
                ++better;
            }
        }
        ranks[i] = better + 1;
    }
    return ranks;
}

EvalResult evaluate_model(const model::MoeModel& m, const data::Dataset& d) {
    if (d.empty()) throw ValidationError("evaluate_model: empty dataset");
    std::vector<double> pred, truth;
    std::vector<std::string> systems;
    std::size_t correct = 0;
    RngState rng(0); // unused in eval mode
    for (const auto& s : d.samples()) {
        if (!s.mos) {
            throw ValidationError("evaluate_model: sample " + s.utt_id + " has no mos label");
        }
        const auto out = m.forward(s.embedding, model::Mode::kEval, rng);
        pred.push_back(out.mos_pred);
        truth.push_back(*s.mos);
        systems.push_back(s.system_id);
        const std::size_t argmax = static_cast<std::size_t>(
            std::max_element(out.class_logits.begin(), out.class_logits.end()) -
            out.class_logits.begin());
        if (argmax == d.class_index(s.system_id)) ++correct;
    }
    EvalResult r;
    r.utterance = utterance_metrics(pred, truth);
    r.system = system_metrics(pred, truth, systems);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(d.size());
    return r;
}

std::string format_fixed3(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[512];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    std::string s(buf, res.ptr);
    const bool neg = !s.empty() && s[0] == '-';
    if (neg) s.erase(s.begin());
    std::string ip = s, fp;
    if (const auto dot = s.find('.'); dot != std::string::npos) {
        ip = s.substr(0, dot);
        fp = s.substr(dot + 1);
    }
    if (fp.size() < 3) {
        fp.append(3 - fp.size(), '0');
    } else if (fp.size() > 3) {
        // Round-half-even on the printed decimal digits.
        const char next = fp[3];
        const bool rest_nonzero = fp.find_first_not_of('0', 4) != std::string::npos;
        bool up = false;
        if (next > '5' || (next == '5' && rest_nonzero)) {
            up = true;
        } else if (next == '5') {
            up = ((fp[2] - '0') % 2) == 1;
        }
        fp.resize(3);
        if (up) {
            int i = 2;
            while (i >= 0 && fp[static_cast<std::size_t>(i)] == '9') {
                fp[static_cast<std::size_t>(i)] = '0';
                --i;
            }
            if (i >= 0) {
                ++fp[static_cast<std::size_t>(i)];
            } else {
                int j = static_cast<int>(ip.size()) - 1;
                while (j >= 0 && ip[static_cast<std::size_t>(j)] == '9') {
                    ip[static_cast<std::size_t>(j)] = '0';
                    --j;
                }
                if (j >= 0) {
                    ++ip[static_cast<std::size_t>(j)];
                } else {
                    ip.insert(ip.begin(), '1');
                }
            }
        }
    }
    std::string out = ip + "." + fp;
    const bool all_zero = out.find_first_not_of("0.") == std::string::npos;
    return (neg && !all_zero) ? "-" + out : out;
}

std::string render_rank_table(const std::vector<RankEntry>& entries,
                              const std::string& level) {
    if (entries.empty()) throw ValidationError("render_rank_table: no entries");

    // Per metric column: collect defined values, rank them, then map back.
    struct Column {
        const char* header;
        bool higher_is_better;
        std::vector<std::optional<double>> raw;
    };
    std::vector<Column> cols = {
        {"MSE", false, {}}, {"LCC", true, {}}, {"SRCC", true, {}}, {"KTAU", true, {}}};
    for (const auto& e : entries) {
        cols[0].raw.push_back(e.report.mse);
        cols[1].raw.push_back(e.report.lcc);
        cols[2].raw.push_back(e.report.srcc);
        cols[3].raw.push_back(e.report.ktau);
    }
    std::vector<std::vector<std::string>> rank_cells(
        cols.size(), std::vector<std::string>(entries.size(), "-"));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        std::vector<double> defined;
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < entries.size(); ++r) {
            if (cols[c].raw[r]) {
                defined.push_back(*cols[c].raw[r]);
                rows.push_back(r);
            }
        }
        if (defined.empty()) continue;
        const auto ranks = competition_rank(defined, cols[c].higher_is_better);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            rank_cells[c][rows[k]] = std::to_string(ranks[k]);
        }
    }

    std::size_t name_width = level.size() + 6; // the "-level" suffix
    for (const auto& e : entries) name_width = std::max(name_width, e.name.size());
    name_width += 2;

    std::ostringstream out;
    auto pad_left = [](const std::string& s, std::size_t w) {
        return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
    };
    out << level << "-level" << std::string(name_width - level.size() - 6, ' ');
    for (const auto& c : cols) out << pad_left(c.header, 8);
    for (const auto& c : cols) out << pad_left(std::string("r") + c.header, 7);
    out << '\n';
    for (std::size_t r = 0; r < entries.size(); ++r) {
        out << entries[r].name
            << std::string(name_width - entries[r].name.size(), ' ');
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out << pad_left(cols[c].raw[r] ? format_fixed3(*cols[c].raw[r]) : "n/a", 8);
        }
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out << pad_left(rank_cells[c][r], 7);
        }
        out << '\n';
    }
    return out.str();
}

std::string eval_result_to_json(const EvalResult& r, const std::string& name) {
    ordered_json j;
    j["name"] = name;
    j["utterance"] = report_to_json(r.utterance);
    j["system"] = report_to_json(r.system);
    j["accuracy"] = r.accuracy;
    return j.dump(2) + "\n";
}

void write_eval_result(const std::filesystem::path& path, const EvalResult& r,
                       const std::string& name) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write report " + path.string());
    out << eval_result_to_json(r, name);
    if (!out) throw PipelineError("failed writing report " + path.string());
}

NamedReports read_eval_result(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open report " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    NamedReports r;
    if (!j.is_object() || !j.contains("utterance") || !j.contains("system")) {
        throw ValidationError(path.string() + ": expected utterance and system reports");
    }
    r.name = j.contains("name") ? j["name"].get<std::string>() : path.stem().string();
    r.utterance = report_from_json(j["utterance"], path.string() + ".utterance");
    r.system = report_from_json(j["system"], path.string() + ".system");
    return r;
}

} // namespace moemos::metrics
