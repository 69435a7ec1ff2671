// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "moemos/errors.hpp"
#include "moemos/metrics.hpp"
#include "moemos/rng.hpp"

using namespace moemos;
namespace m = moemos::metrics;

namespace {

// Independent oracles, written against the definitions rather than the
// library code. Where the test demands exact equality the final arithmetic
// mirrors the documented formula so both sides perform the same operations.

std::vector<double> oracle_average_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t below = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++below;
            if (v[j] == v[i]) ++equal;
        }
        // Average of 1-based positions below+1 .. below+equal.
        ranks[i] = static_cast<double>(below) +
                   (static_cast<double>(equal) + 1.0) / 2.0;
    }
    return ranks;
}

std::optional<double> oracle_pearson(const std::vector<double>& x,
                                     const std::vector<double>& y) {
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

std::optional<double> oracle_tau_b(const std::vector<double>& x,
                                   const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::int64_t concordant = 0, discordant = 0;
    std::uint64_t tx = 0, ty = 0, txy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool ex = x[i] == x[j];
            const bool ey = y[i] == y[j];
            if (ex && ey) {
                ++tx;
                ++ty;
                ++txy;
            } else if (ex) {
                ++tx;
            } else if (ey) {
                ++ty;
            } else if ((x[i] < x[j]) == (y[i] < y[j])) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    (void)txy;
    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    if (n0 == tx || n0 == ty) return std::nullopt;
    const double den = std::sqrt(static_cast<double>(n0 - tx)) *
                       std::sqrt(static_cast<double>(n0 - ty));
    return std::clamp(static_cast<double>(concordant - discordant) / den, -1.0, 1.0);
}

std::vector<double> random_vector(RngState& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) {
        // A small integer alphabet half the time forces plenty of ties.
        x = rng.next_unit() < 0.5 ? static_cast<double>(rng.next_below(5))
                                  : rng.next_normal();
    }
    return v;
}

} // namespace

TEST_CASE("mse") {
    CHECK(m::mse(std::vector<double>{1.0, 2.0}, std::vector<double>{2.0, 4.0}) == 2.5);
    CHECK(m::mse(std::vector<double>{3.0}, std::vector<double>{3.0}) == 0.0);
    CHECK_THROWS_AS(m::mse(std::vector<double>{}, std::vector<double>{}), ValidationError);
    CHECK_THROWS_AS(m::mse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    ValidationError);
}

TEST_CASE("average_ranks averages tie groups") {
    CHECK(m::average_ranks(std::vector<double>{10.0, 20.0, 20.0, 30.0}) ==
          std::vector<double>{1.0, 2.5, 2.5, 4.0});
    CHECK(m::average_ranks(std::vector<double>{5.0, 5.0, 5.0}) ==
          std::vector<double>{2.0, 2.0, 2.0});
    CHECK(m::average_ranks(std::vector<double>{3.0, 1.0, 2.0}) ==
          std::vector<double>{3.0, 1.0, 2.0});
}

TEST_CASE("pearson") {
    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * v + 1.0);
    CHECK(*m::pearson(x, y) == doctest::Approx(1.0).epsilon(1e-15));
    for (double& v : y) v = -v;
    CHECK(*m::pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-15));

    // Perfect-square sums make the normalizer exact, so equality is exact.
    const std::vector<double> xe = {0.0, 0.0, 2.0, 2.0};
    const std::vector<double> ye = {1.0, 1.0, 5.0, 5.0};
    CHECK(*m::pearson(xe, ye) == 1.0);
    CHECK_FALSE(m::pearson(x, std::vector<double>(4, 7.0)).has_value());
    CHECK_THROWS_AS(m::pearson(std::vector<double>{1.0}, std::vector<double>{1.0}),
                    ValidationError);
    CHECK_THROWS_AS(
        m::pearson(std::vector<double>{1.0, std::nan("")}, std::vector<double>{1.0, 2.0}),
        ValidationError);
}

TEST_CASE("spearman hand fixture") {
    // ranks([1,1,2]) = [1.5, 1.5, 3]; pearson with [1,2,3] = 1.5 / sqrt(3).
    const auto r = m::spearman(std::vector<double>{1.0, 1.0, 2.0},
                               std::vector<double>{1.0, 2.0, 3.0});
    REQUIRE(r.has_value());
    CHECK(*r == doctest::Approx(1.5 / std::sqrt(3.0)).epsilon(1e-9));
    CHECK(*r == doctest::Approx(0.8660254037844386).epsilon(1e-9));

    // Invariant under strictly monotone maps: ranks are identical, so the
    // result is bit-identical to the self-correlation.
    const std::vector<double> x = {0.3, 1.2, -4.0, 2.2, 0.9};
    std::vector<double> y;
    for (double v : x) y.push_back(std::exp(v));
    CHECK(*m::spearman(x, y) == *m::spearman(x, x));
    CHECK(*m::spearman(x, y) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("kendall tau-b hand fixture") {
    const auto t = m::kendall_tau_b(std::vector<double>{1.0, 2.0, 2.0, 3.0},
                                    std::vector<double>{1.0, 2.0, 3.0, 4.0});
    REQUIRE(t.has_value());
    CHECK(*t == doctest::Approx(5.0 / std::sqrt(30.0)).epsilon(1e-9));
    CHECK_FALSE(m::kendall_tau_b(std::vector<double>{1.0, 1.0},
                                 std::vector<double>{1.0, 2.0})
                    .has_value());
    const std::vector<double> asc = {1.0, 2.0, 3.0};
    CHECK(*m::kendall_tau_b(asc, asc) == 1.0);
    const std::vector<double> desc = {3.0, 2.0, 1.0};
    CHECK(*m::kendall_tau_b(asc, desc) == -1.0);
}

TEST_CASE("correlations match brute-force oracles on random pairs") {
    RngState rng(501);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.next_below(49);
        const auto x = random_vector(rng, n);
        const auto y = random_vector(rng, n);

        const auto tau = m::kendall_tau_b(x, y);
        const auto tau_ref = oracle_tau_b(x, y);
        REQUIRE(tau.has_value() == tau_ref.has_value());
        if (tau) CHECK(*tau == *tau_ref); // exact: identical integer counts

        const auto rho = m::spearman(x, y);
        const auto rho_ref = oracle_pearson(oracle_average_ranks(x), oracle_average_ranks(y));
        REQUIRE(rho.has_value() == rho_ref.has_value());
        if (rho) CHECK(*rho == *rho_ref);

        const auto lcc = m::pearson(x, y);
        const auto lcc_ref = oracle_pearson(x, y);
        REQUIRE(lcc.has_value() == lcc_ref.has_value());
        if (lcc) CHECK(*lcc == *lcc_ref);
    }
}

TEST_CASE("utterance and system level reports") {
    const std::vector<double> pred = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> truth = {1.5, 2.5, 2.9, 4.2};
    const std::vector<std::string> sys = {"a", "a", "b", "b"};

    const auto u = m::utterance_metrics(pred, truth);
    CHECK(u.level == "utterance");
    CHECK(u.n == 4);
    CHECK(u.mse == m::mse(pred, truth));
    CHECK(u.srcc == m::spearman(pred, truth));

    const auto s = m::system_metrics(pred, truth, sys);
    CHECK(s.level == "system");
    CHECK(s.n == 2);
    // Means: pred a=1.5 b=3.5, truth a=2.0 b=3.55.
    CHECK(s.mse == m::mse(std::vector<double>{1.5, 3.5}, std::vector<double>{2.0, 3.55}));
    CHECK(*s.srcc == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(m::system_metrics(pred, truth, {"a", "a", "a", "a"}), ValidationError);
    CHECK_THROWS_AS(m::system_metrics(pred, truth, {"a", "b"}), ValidationError);
}

TEST_CASE("competition ranking") {
    SUBCASE("published leaderboard column with a shared rank") {
        const std::vector<double> ktau = {0.547, 0.705, 0.789, 0.779, 0.750, 0.758, 0.758};
        CHECK(m::competition_rank(ktau, true) ==
              std::vector<std::size_t>{7, 6, 1, 2, 5, 3, 3});
    }
    SUBCASE("lower is better for error metrics") {
        const std::vector<double> mse = {0.3, 0.1, 0.2};
        CHECK(m::competition_rank(mse, false) == std::vector<std::size_t>{3, 1, 2});
    }
    SUBCASE("all equal share rank 1") {
        CHECK(m::competition_rank(std::vector<double>(4, 2.0), true) ==
              std::vector<std::size_t>{1, 1, 1, 1});
    }
    SUBCASE("strictly decreasing gives 1..n") {
        CHECK(m::competition_rank(std::vector<double>{9.0, 7.0, 4.0}, true) ==
              std::vector<std::size_t>{1, 2, 3});
    }
    SUBCASE("tie group is followed by a skip") {
        CHECK(m::competition_rank(std::vector<double>{5.0, 5.0, 4.0, 3.0}, true) ==
              std::vector<std::size_t>{1, 1, 3, 4});
    }
    CHECK_THROWS_AS(m::competition_rank(std::vector<double>{1.0, std::nan("")}, true),
                    ValidationError);
}

TEST_CASE("rank and raw order stay consistent on random columns") {
    RngState rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.next_below(9);
        std::vector<double> v(n);
        for (double& x : v) x = static_cast<double>(rng.next_below(5));
        for (const bool higher : {true, false}) {
            const auto ranks = m::competition_rank(v, higher);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (v[i] == v[j]) CHECK(ranks[i] == ranks[j]);
                    if (higher ? v[i] > v[j] : v[i] < v[j]) CHECK(ranks[i] < ranks[j]);
                }
            }
        }
    }
}

TEST_CASE("format_fixed3 rounds half to even on printed digits") {
    CHECK(m::format_fixed3(0.0625) == "0.062");
    CHECK(m::format_fixed3(0.1875) == "0.188");
    CHECK(m::format_fixed3(2.0) == "2.000");
    CHECK(m::format_fixed3(-1.2345) == "-1.234");
    CHECK(m::format_fixed3(0.9995) == "1.000");
    CHECK(m::format_fixed3(-0.0001) == "0.000"); // no negative zero
    CHECK(m::format_fixed3(0.1) == "0.100");
    CHECK(m::format_fixed3(9.9995) == "10.000");
}

TEST_CASE("render_rank_table") {
    m::MetricsReport full;
    full.level = "system";
    full.mse = 0.056;
    full.lcc = 0.978;
    full.srcc = 0.913;
    full.ktau = 0.758;
    full.n = 10;

    m::MetricsReport partial = full;
    partial.mse = 0.119;
    partial.lcc = std::nullopt;

    SUBCASE("raw cells, n/a and rank columns") {
        const auto text = m::render_rank_table({{"ours", full}, {"base", partial}}, "system");
        CHECK(text.find("system-level") == 0);
        CHECK(text.find("MSE") != std::string::npos);
        CHECK(text.find("rKTAU") != std::string::npos);
        CHECK(text.find("0.056") != std::string::npos);
        CHECK(text.find("n/a") != std::string::npos);

        // Two data lines; undefined lcc leaves "-" in its rank column.
        const auto base_line = text.substr(text.find("base"));
        CHECK(base_line.find(" - ") != std::string::npos);
    }

    SUBCASE("single entry ranks 1 everywhere") {
        const auto text = m::render_rank_table({{"only", full}}, "utterance");
        std::size_t ones = 0;
        for (std::size_t pos = text.find("only"); pos < text.size(); ++pos) {
            ones += text[pos] == '1' && text[pos - 1] == ' ';
        }
        CHECK(ones >= 4);
    }

    CHECK_THROWS_AS(m::render_rank_table({}, "system"), ValidationError);
}

TEST_CASE("eval result JSON round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "moemos_metrics_test";
    std::filesystem::create_directories(dir);

    m::EvalResult r;
    r.utterance.level = "utterance";
    r.utterance.mse = 0.25;
    r.utterance.lcc = 0.5;
    r.utterance.srcc = std::nullopt; // serialized as null, read back as nullopt
    r.utterance.ktau = -0.125;
    r.utterance.n = 7;
    r.system.level = "system";
    r.system.mse = 0.03125;
    r.system.lcc = 0.75;
    r.system.srcc = 1.0;
    r.system.ktau = 1.0;
    r.system.n = 2;
    r.accuracy = 0.875;

    const auto path = dir / "report.json";
    m::write_eval_result(path, r, "demo");
    const auto back = m::read_eval_result(path);
    CHECK(back.name == "demo");
    CHECK(back.utterance.mse == r.utterance.mse);
    CHECK(back.utterance.lcc == r.utterance.lcc);
    CHECK_FALSE(back.utterance.srcc.has_value());
    CHECK(back.utterance.ktau == r.utterance.ktau);
    CHECK(back.utterance.n == 7);
    CHECK(back.system.srcc == 1.0);

    SUBCASE("name falls back to the file stem") {
        const auto unnamed = dir / "stemname.json";
        std::ofstream out(unnamed);
        const auto text = m::eval_result_to_json(r, "ignored");
        out << text.substr(text.find("\"utterance\"") - 1).insert(0, "{");
        out.close();
        CHECK(m::read_eval_result(unnamed).name == "stemname");
    }

    SUBCASE("missing and malformed files") {
        CHECK_THROWS_AS(m::read_eval_result(dir / "absent.json"), PipelineError);
        const auto bad = dir / "bad.json";
        std::ofstream(bad) << "not json";
        CHECK_THROWS_AS(m::read_eval_result(bad), ValidationError);
        const auto incomplete = dir / "incomplete.json";
        std::ofstream(incomplete) << "{\"utterance\": {}}";
        CHECK_THROWS_AS(m::read_eval_result(incomplete), ValidationError);
    }

    std::filesystem::remove_all(dir);
}
