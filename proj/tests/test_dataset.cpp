// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "moemos/dataset.hpp"
#include "moemos/errors.hpp"

using namespace moemos;
using data::Dataset;
using data::Sample;

namespace {

Sample make_sample(std::string utt, std::string sys, double mos,
                   std::vector<double> emb) {
    Sample s;
    s.utt_id = std::move(utt);
    s.system_id = std::move(sys);
    s.mos = mos;
    s.embedding = std::move(emb);
    return s;
}

std::filesystem::path fresh_dir(const std::string& leaf) {
    const auto dir = std::filesystem::temp_directory_path() / leaf;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("pool_features means frame vectors") {
    CHECK(data::pool_features({{1.0, 2.0}, {3.0, 6.0}}) == std::vector<double>{2.0, 4.0});
    CHECK(data::pool_features({{5.0, -1.0}}) == std::vector<double>{5.0, -1.0});
    CHECK_THROWS_AS(data::pool_features({}), ValidationError);
    CHECK_THROWS_AS(data::pool_features({{}}), ValidationError);
    CHECK_THROWS_AS(data::pool_features({{1.0, 2.0}, {3.0}}), ValidationError);
}

TEST_CASE("dataset vocabulary and labels") {
    std::vector<Sample> samples = {
        make_sample("u1", "sysB", 3.0, {0.0, 1.0}),
        make_sample("u2", "sysA", 4.0, {1.0, 0.0}),
        make_sample("u3", "sysB", 2.0, {0.5, 0.5}),
    };
    const Dataset d(samples, 2);
    CHECK(d.system_vocab() == std::vector<std::string>{"sysA", "sysB"});
    CHECK(d.class_index("sysA") == 0);
    CHECK(d.class_index("sysB") == 1);
    CHECK_THROWS_AS(d.class_index("sysC"), ValidationError);

    SUBCASE("inherited vocabulary must cover every sample") {
        CHECK_NOTHROW(Dataset(samples, 2, {"sysA", "sysB", "sysC"}));
        CHECK_THROWS_AS(Dataset(samples, 2, {"sysA"}), ValidationError);
        const Dataset wide = data::with_vocab(d, {"sysA", "sysB", "sysZ"});
        CHECK(wide.class_index("sysZ") == 2);
        CHECK_THROWS_AS(data::with_vocab(d, {"sysB"}), ValidationError);
    }

    SUBCASE("sample validation") {
        CHECK_THROWS_AS(Dataset({make_sample("", "s", 3.0, {0.0, 0.0})}, 2),
                        ValidationError);
        CHECK_THROWS_AS(Dataset({make_sample("u", "", 3.0, {0.0, 0.0})}, 2),
                        ValidationError);
        CHECK_THROWS_AS(Dataset({make_sample("u", "s", 3.0, {0.0})}, 2), ValidationError);
        CHECK_THROWS_AS(Dataset({make_sample("u", "s", 3.0, {0.0, std::nan("")})}, 2),
                        ValidationError);
        CHECK_THROWS_AS(Dataset({make_sample("u", "s", 0.5, {0.0, 0.0})}, 2),
                        ValidationError);
        CHECK_THROWS_AS(Dataset({make_sample("u", "s", 5.5, {0.0, 0.0})}, 2),
                        ValidationError);
        CHECK_THROWS_AS(Dataset({}, 0), ValidationError);
        Sample unlabeled = make_sample("u", "s", 3.0, {0.0, 0.0});
        unlabeled.mos.reset();
        CHECK_NOTHROW(Dataset({unlabeled}, 2));
    }
}

TEST_CASE("embedding file round trip") {
    const auto dir = fresh_dir("moemos_dataset_embed");
    const auto path = dir / "emb.bin";

    // f32-exact values survive the narrowing untouched.
    const std::vector<std::vector<double>> rows = {{0.5, -1.25, 3.0}, {2.0, 0.0, -7.5}};
    data::write_embedding_file(path, rows);
    CHECK(data::read_embedding_file(path) == rows);

    SUBCASE("non-representable values narrow to f32") {
        data::write_embedding_file(path, {{0.1, 1.0 / 3.0}});
        const auto back = data::read_embedding_file(path);
        CHECK(back[0][0] == static_cast<double>(static_cast<float>(0.1)));
        CHECK(back[0][1] == static_cast<double>(static_cast<float>(1.0 / 3.0)));
    }
    SUBCASE("bad magic") {
        std::ofstream(path, std::ios::binary) << "NOPExxxxxxxxxxxxxxxx";
        CHECK_THROWS_AS(data::read_embedding_file(path), PipelineError);
    }
    SUBCASE("trailing bytes") {
        data::write_embedding_file(path, rows);
        std::ofstream(path, std::ios::binary | std::ios::app) << "x";
        CHECK_THROWS_AS(data::read_embedding_file(path), PipelineError);
    }
    SUBCASE("truncation") {
        data::write_embedding_file(path, rows);
        std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
        CHECK_THROWS_AS(data::read_embedding_file(path), PipelineError);
    }
    SUBCASE("rejects empty and ragged input") {
        CHECK_THROWS_AS(data::write_embedding_file(path, {}), ValidationError);
        CHECK_THROWS_AS(data::write_embedding_file(path, {{1.0}, {1.0, 2.0}}),
                        ValidationError);
    }

    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest round trips") {
    const auto dir = fresh_dir("moemos_dataset_manifest");

    std::vector<Sample> samples = {
        make_sample("u1", "sysA", 3.5, {0.5, -1.25}),
        make_sample("u2", "sysB", 2.0, {2.0, 0.0}),
    };
    samples[0].rater_scores = {{"r00", 3.0}, {"r01", 4.0}};
    const Dataset d(samples, 2);

    SUBCASE("binary embeddings by default") {
        const auto manifest = dir / "data.jsonl";
        data::save_manifest(d, manifest);
        CHECK(std::filesystem::exists(dir / "embeddings.bin"));
        const Dataset back = data::load_manifest(manifest, true);
        REQUIRE(back.size() == 2);
        CHECK(back.dim() == 2);
        CHECK(back.samples()[0].utt_id == "u1");
        CHECK(back.samples()[0].embedding == samples[0].embedding);
        CHECK(back.samples()[0].rater_scores == samples[0].rater_scores);
        CHECK(back.samples()[1].mos == 2.0);
        CHECK(back.system_vocab() == d.system_vocab());
    }

    SUBCASE("inline embeddings keep full precision") {
        std::vector<Sample> fine = {make_sample("u1", "s", 3.0, {0.1, 1.0 / 3.0})};
        const auto manifest = dir / "inline.jsonl";
        data::SaveOptions opts;
        opts.inline_embeddings = true;
        data::save_manifest(Dataset(fine, 2), manifest, opts);
        CHECK_FALSE(std::filesystem::exists(dir / "embeddings.bin"));
        const Dataset back = data::load_manifest(manifest, true);
        CHECK(back.samples()[0].embedding == fine[0].embedding);
    }

    SUBCASE("frame matrices are mean-pooled at load") {
        const auto manifest = dir / "frames.jsonl";
        std::ofstream(manifest)
            << R"({"utt_id":"u1","system_id":"s","mos":3.0,"embedding":[[1.0,2.0],[3.0,6.0]]})"
            << "\n";
        const Dataset back = data::load_manifest(manifest, true);
        CHECK(back.samples()[0].embedding == std::vector<double>{2.0, 4.0});
    }

    SUBCASE("labels only required on demand") {
        const auto manifest = dir / "unlabeled.jsonl";
        std::ofstream(manifest)
            << R"({"utt_id":"u1","system_id":"s","embedding":[0.0,1.0]})" << "\n";
        CHECK_THROWS_AS(data::load_manifest(manifest, true), ValidationError);
        const Dataset back = data::load_manifest(manifest, false);
        CHECK_FALSE(back.samples()[0].mos.has_value());
    }

    SUBCASE("rejections") {
        const auto manifest = dir / "bad.jsonl";
        std::ofstream(manifest)
            << R"({"utt_id":"u1","system_id":"s","mos":3.0,"embedding":[0.0],"foo":1})"
            << "\n";
        CHECK_THROWS_AS(data::load_manifest(manifest, true), ValidationError);

        std::ofstream(manifest) << "not json\n";
        CHECK_THROWS_AS(data::load_manifest(manifest, true), ValidationError);

        std::ofstream(manifest)
            << R"({"utt_id":"u1","system_id":"s","mos":3.0})" << "\n";
        CHECK_THROWS_AS(data::load_manifest(manifest, true), ValidationError);

        std::ofstream(manifest)
            << R"({"utt_id":"u1","system_id":"s","mos":3.0,"embedding":[0.0],)"
            << R"("embedding_ref":{"path":"x","row_index":0}})" << "\n";
        CHECK_THROWS_AS(data::load_manifest(manifest, true), ValidationError);

        CHECK_THROWS_AS(data::load_manifest(dir / "absent.jsonl", true), PipelineError);
    }

    std::filesystem::remove_all(dir);
}

TEST_CASE("normalizer") {
    const Dataset d({make_sample("u1", "s", 3.0, {1.0, 2.0, 7.0}),
                     make_sample("u2", "s", 3.0, {3.0, 6.0, 7.0})},
                    3);
    const auto n = data::fit_normalizer(d);
    CHECK(n.mean == std::vector<double>{2.0, 4.0, 7.0});
    // Population std; the constant third dimension falls back to scale 1.
    CHECK(n.scale == std::vector<double>{1.0, 2.0, 1.0});

    CHECK(data::apply_normalizer(n, std::vector<double>{3.0, 6.0, 7.0}) ==
          std::vector<double>{1.0, 1.0, 0.0});
    const Dataset nd = data::apply_normalizer(n, d);
    CHECK(nd.samples()[0].embedding == std::vector<double>{-1.0, -1.0, 0.0});
    CHECK(nd.system_vocab() == d.system_vocab());

    CHECK_THROWS_AS(data::apply_normalizer(n, std::vector<double>{1.0}), ValidationError);
    CHECK_THROWS_AS(data::fit_normalizer(Dataset({}, 1)), ValidationError);
}

TEST_CASE("stratified split") {
    // 12 samples, 3 systems x 4: fractions 0.5/0.25/0.25 give 2/1/1 each.
    std::vector<Sample> samples;
    for (int sys = 0; sys < 3; ++sys) {
        for (int i = 0; i < 4; ++i) {
            samples.push_back(make_sample("u" + std::to_string(sys * 4 + i),
                                          "sys" + std::to_string(sys), 3.0,
                                          {static_cast<double>(i), 0.0}));
        }
    }
    const Dataset d(samples, 2);
    const data::SplitFractions f{0.5, 0.25, 0.25};
    const auto idx = data::split_indices(d, f, 42);

    CHECK(idx.train.size() == 6);
    CHECK(idx.val.size() == 3);
    CHECK(idx.test.size() == 3);
    CHECK(std::is_sorted(idx.train.begin(), idx.train.end()));
    CHECK(std::is_sorted(idx.val.begin(), idx.val.end()));
    CHECK(std::is_sorted(idx.test.begin(), idx.test.end()));

    std::set<std::size_t> seen;
    for (const auto* part : {&idx.train, &idx.val, &idx.test}) {
        for (std::size_t i : *part) {
            CHECK(seen.insert(i).second); // disjoint
        }
    }
    CHECK(seen.size() == 12); // covers everything

    // Stratified: each system contributes exactly 2/1/1.
    for (int sys = 0; sys < 3; ++sys) {
        const auto lo = static_cast<std::size_t>(sys * 4);
        const auto hi = lo + 4;
        auto in_range = [&](const std::vector<std::size_t>& v) {
            return std::count_if(v.begin(), v.end(),
                                 [&](std::size_t i) { return i >= lo && i < hi; });
        };
        CHECK(in_range(idx.train) == 2);
        CHECK(in_range(idx.val) == 1);
        CHECK(in_range(idx.test) == 1);
    }

    SUBCASE("deterministic in the seed") {
        const auto again = data::split_indices(d, f, 42);
        CHECK(again.train == idx.train);
        CHECK(again.val == idx.val);
        CHECK(again.test == idx.test);
        const auto other = data::split_indices(d, f, 43);
        CHECK(other.train != idx.train);
    }

    SUBCASE("remainder goes to train") {
        // 5 per system: 0.6/0.2/0.2 -> floor 3/1/1, no remainder; with 7 the
        // floors are 4/1/1 and the leftover sample lands in train.
        std::vector<Sample> odd;
        for (int i = 0; i < 7; ++i) {
            odd.push_back(make_sample("a" + std::to_string(i), "sysA", 3.0, {0.0, 0.0}));
            odd.push_back(make_sample("b" + std::to_string(i), "sysB", 3.0, {0.0, 0.0}));
        }
        const auto oi = data::split_indices(Dataset(odd, 2), data::SplitFractions{}, 1);
        CHECK(oi.train.size() == 10);
        CHECK(oi.val.size() == 2);
        CHECK(oi.test.size() == 2);
    }

    SUBCASE("materialized split keeps the full vocabulary") {
        const auto parts = data::split_dataset(d, f, 42);
        CHECK(parts.train.system_vocab() == d.system_vocab());
        CHECK(parts.val.system_vocab() == d.system_vocab());
        CHECK(parts.test.system_vocab() == d.system_vocab());
        CHECK(parts.train.size() == 6);
        CHECK(parts.train.class_index("sys2") == 2);
    }

    SUBCASE("subset keeps vocabulary and order") {
        const auto sub = data::subset(d, {3, 5});
        CHECK(sub.size() == 2);
        CHECK(sub.samples()[0].utt_id == "u3");
        CHECK(sub.samples()[1].utt_id == "u5");
        CHECK(sub.system_vocab() == d.system_vocab());
        CHECK_THROWS_AS(data::subset(d, {99}), ValidationError);
    }

    SUBCASE("rejections") {
        CHECK_THROWS_AS(data::split_indices(d, data::SplitFractions{0.5, 0.5, 0.5}, 1),
                        ValidationError);
        CHECK_THROWS_AS(data::split_indices(d, data::SplitFractions{0.0, 0.5, 0.5}, 1),
                        ValidationError);
    }
}
