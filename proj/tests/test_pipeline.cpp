// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moemos/config.hpp"
#include "moemos/errors.hpp"
#include "moemos/pipeline.hpp"

using namespace moemos;
using pipeline::DataBundle;

namespace {

synth::SynthConfig micro_synth() {
    synth::SynthConfig cfg;
    cfg.n_systems = 2;
    cfg.dim = 4;
    cfg.per_system = 30;
    cfg.system_mos = {2.5, 4.0};
    cfg.n_raters_train = 3;
    cfg.n_raters_test = 3;
    cfg.raters_per_utt = 2;
    cfg.seed = 55;
    return cfg;
}

// Small end-to-end run config compatible with micro data on disk.
config::RunConfig micro_run_config() {
    return config::parse_run_config(R"({
      "seed": 55,
      "synth": {
        "n_systems": 2, "dim": 4, "per_system": 30,
        "system_mos": [2.5, 4.0],
        "n_raters_train": 3, "n_raters_test": 3, "raters_per_utt": 2
      },
      "model": {
        "n_experts": 2, "input_dim": 4, "expert_hidden": [8, 4],
        "expert_out_dim": 4, "dropout_rate": 0.1, "n_classes": 2
      },
      "stages": [
        {"stage": 1, "epochs": 1, "lr_max": 1e-4, "batch_size": 4},
        {"stage": 2, "epochs": 1, "lr_max": 5e-5, "batch_size": 4},
        {"stage": 3, "epochs": 1, "lr_max": 1e-5, "batch_size": 4}
      ]
    })");
}

std::filesystem::path fresh_dir(const std::string& tag) {
    const auto dir =
        std::filesystem::temp_directory_path() / ("moemos_pipeline_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::set<std::string> rater_ids(const data::Dataset& d) {
    std::set<std::string> ids;
    for (const auto& s : d.samples()) {
        for (const auto& [id, score] : s.rater_scores) ids.insert(id);
    }
    return ids;
}

void check_eval_equal(const metrics::EvalResult& a, const metrics::EvalResult& b) {
    CHECK(a.utterance.mse == b.utterance.mse);
    CHECK(a.utterance.lcc == b.utterance.lcc);
    CHECK(a.utterance.srcc == b.utterance.srcc);
    CHECK(a.utterance.ktau == b.utterance.ktau);
    CHECK(a.utterance.n == b.utterance.n);
    CHECK(a.system.mse == b.system.mse);
    CHECK(a.system.srcc == b.system.srcc);
    CHECK(a.system.n == b.system.n);
    CHECK(a.accuracy == b.accuracy);
}

} // namespace

TEST_CASE("prepare_data produces stratified splits with paired test labelings") {
    const auto cfg = micro_synth();
    const DataBundle b = pipeline::prepare_data(cfg, {0.6, 0.2, 0.2});

    CHECK(b.train.size() == 36);
    CHECK(b.val.size() == 12);
    CHECK(b.test_same.size() == 12);
    CHECK(b.test_shift.size() == 12);
    CHECK(b.train.dim() == 4);
    CHECK(b.truth.utt_ids.size() == 60);
    CHECK(b.truth.rater_bias.size() == 6);

    REQUIRE(b.test_same.size() == b.test_shift.size());
    bool any_label_differs = false;
    for (std::size_t i = 0; i < b.test_same.size(); ++i) {
        const auto& same = b.test_same.samples()[i];
        const auto& shift = b.test_shift.samples()[i];
        CHECK(same.utt_id == shift.utt_id);
        CHECK(same.system_id == shift.system_id);
        CHECK(same.embedding == shift.embedding);
        REQUIRE(same.mos.has_value());
        REQUIRE(shift.mos.has_value());
        if (*same.mos != *shift.mos) any_label_differs = true;
    }
    CHECK(any_label_differs);

    // Same-pool labels come from train raters, shifted labels from the
    // disjoint test pool.
    const std::set<std::string> train_pool = {"r00", "r01", "r02"};
    const std::set<std::string> test_pool = {"r03", "r04", "r05"};
    for (const auto& id : rater_ids(b.train)) CHECK(train_pool.contains(id));
    for (const auto& id : rater_ids(b.test_same)) CHECK(train_pool.contains(id));
    for (const auto& id : rater_ids(b.test_shift)) CHECK(test_pool.contains(id));

    const std::vector<std::string> vocab = {"sys00", "sys01"};
    CHECK(b.train.system_vocab() == vocab);
    CHECK(b.test_shift.system_vocab() == vocab);

    // Splits are disjoint by utterance id and cover the corpus.
    std::set<std::string> seen;
    for (const auto* d : {&b.train, &b.val, &b.test_same}) {
        for (const auto& s : d->samples()) CHECK(seen.insert(s.utt_id).second);
    }
    CHECK(seen.size() == 60);
}

TEST_CASE("prepare_data is deterministic") {
    const auto cfg = micro_synth();
    const DataBundle a = pipeline::prepare_data(cfg, {0.6, 0.2, 0.2});
    const DataBundle b = pipeline::prepare_data(cfg, {0.6, 0.2, 0.2});
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        const auto& sa = a.train.samples()[i];
        const auto& sb = b.train.samples()[i];
        CHECK(sa.utt_id == sb.utt_id);
        CHECK(sa.embedding == sb.embedding);
        CHECK(*sa.mos == *sb.mos);
    }
}

TEST_CASE("data bundle round trips through disk") {
    const auto dir = fresh_dir("bundle");
    const DataBundle b = pipeline::prepare_data(micro_synth(), {0.6, 0.2, 0.2});
    pipeline::write_data_bundle(b, dir);

    for (const char* name :
         {"train.jsonl", "train_embeddings.bin", "val.jsonl", "val_embeddings.bin",
          "test_same.jsonl", "test_same_embeddings.bin", "test_shift.jsonl",
          "test_shift_embeddings.bin", "ground_truth.jsonl"}) {
        CHECK(std::filesystem::exists(dir / name));
    }

    const DataBundle r = pipeline::load_data_bundle(dir);
    REQUIRE(r.train.size() == b.train.size());
    REQUIRE(r.test_shift.size() == b.test_shift.size());
    CHECK(r.train.system_vocab() == b.train.system_vocab());
    for (std::size_t i = 0; i < b.train.size(); ++i) {
        const auto& orig = b.train.samples()[i];
        const auto& got = r.train.samples()[i];
        CHECK(got.utt_id == orig.utt_id);
        CHECK(*got.mos == *orig.mos);
        CHECK(got.rater_scores == orig.rater_scores);
        REQUIRE(got.embedding.size() == orig.embedding.size());
        for (std::size_t d = 0; d < orig.embedding.size(); ++d) {
            CHECK(got.embedding[d] ==
                  static_cast<double>(static_cast<float>(orig.embedding[d])));
        }
    }
    CHECK(r.truth.utt_ids == b.truth.utt_ids);
    CHECK(r.truth.true_mos == b.truth.true_mos);
    CHECK(r.truth.rater_bias == b.truth.rater_bias);

    // A second load observes exactly the same bytes.
    const DataBundle r2 = pipeline::load_data_bundle(dir);
    for (std::size_t i = 0; i < r.val.size(); ++i) {
        CHECK(r.val.samples()[i].embedding == r2.val.samples()[i].embedding);
        CHECK(*r.val.samples()[i].mos == *r2.val.samples()[i].mos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("load_data_bundle demands every manifest") {
    const auto dir = fresh_dir("missing");
    CHECK_THROWS_WITH_AS(
        pipeline::load_data_bundle(dir),
        doctest::Contains("run the generate command first"), PipelineError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("train_from_config writes the artifact set and matches live eval") {
    const auto data_dir = fresh_dir("train_data");
    const auto out_dir = fresh_dir("train_out");
    const auto cfg = micro_run_config();
    pipeline::write_data_bundle(pipeline::prepare_data(cfg.synth, cfg.split),
                                data_dir);

    const auto a = pipeline::train_from_config(cfg, data_dir, out_dir);
    CHECK(std::filesystem::exists(out_dir / "checkpoint.bin"));
    CHECK(std::filesystem::exists(out_dir / "training_log.csv"));
    CHECK(std::filesystem::exists(out_dir / "run_summary.json"));
    CHECK(std::filesystem::exists(out_dir / "preprocess.json"));
    CHECK(a.checkpoint_path == out_dir / "checkpoint.bin");
    CHECK(a.result.history.size() == 3);

    const auto summary = nlohmann::json::parse(slurp(out_dir / "run_summary.json"));
    CHECK(summary.at("config").at("seed").get<std::uint64_t>() == 55);
    CHECK(summary.at("epochs_run") == nlohmann::json::array({1, 1, 1}));
    CHECK(summary.at("stop_reasons").size() == 3);
    CHECK(summary.at("validation").contains("utterance"));
    CHECK(summary.at("validation").contains("system"));
    CHECK(summary.at("validation").contains("accuracy"));

    // Reloading the checkpoint plus sidecar reproduces the in-memory
    // validation metrics bit for bit.
    const auto reloaded =
        pipeline::evaluate_checkpoint(a.checkpoint_path, data_dir / "val.jsonl");
    check_eval_equal(reloaded, a.val_eval);

    std::filesystem::remove_all(data_dir);
    std::filesystem::remove_all(out_dir);
}

TEST_CASE("train_from_config validates data against the model shape") {
    const auto data_dir = fresh_dir("shape_data");
    const auto cfg = micro_run_config();
    pipeline::write_data_bundle(pipeline::prepare_data(cfg.synth, cfg.split),
                                data_dir);

    auto wide = config::parse_run_config(R"({
      "synth": {"n_systems": 2, "dim": 8, "per_system": 30,
                 "system_mos": [2.5, 4.0], "raters_per_utt": 2,
                 "n_raters_train": 3, "n_raters_test": 3},
      "model": {"n_experts": 2, "input_dim": 8, "expert_hidden": [8, 4],
                 "expert_out_dim": 4, "n_classes": 2}
    })");
    CHECK_THROWS_WITH_AS(
        pipeline::train_from_config(wide, data_dir, data_dir / "out"),
        doctest::Contains("does not match model.input_dim"), ValidationError);

    auto wrong_classes = config::parse_run_config(R"({
      "synth": {"dim": 4, "per_system": 30},
      "model": {"n_experts": 2, "input_dim": 4, "expert_hidden": [8, 4],
                 "expert_out_dim": 4}
    })");
    CHECK_THROWS_WITH_AS(
        pipeline::train_from_config(wrong_classes, data_dir, data_dir / "out"),
        doctest::Contains("model.n_classes"), ValidationError);

    std::filesystem::remove_all(data_dir);
}

TEST_CASE("train_from_config is byte-deterministic") {
    const auto data_dir = fresh_dir("det_data");
    const auto out_a = fresh_dir("det_a");
    const auto out_b = fresh_dir("det_b");
    const auto cfg = micro_run_config();
    pipeline::write_data_bundle(pipeline::prepare_data(cfg.synth, cfg.split),
                                data_dir);

    pipeline::train_from_config(cfg, data_dir, out_a);
    pipeline::train_from_config(cfg, data_dir, out_b);
    for (const char* name : {"checkpoint.bin", "training_log.csv",
                             "run_summary.json", "preprocess.json"}) {
        CAPTURE(name);
        CHECK(slurp(out_a / name) == slurp(out_b / name));
    }

    std::filesystem::remove_all(data_dir);
    std::filesystem::remove_all(out_a);
    std::filesystem::remove_all(out_b);
}

TEST_CASE("evaluate_checkpoint works without a preprocess sidecar") {
    const auto data_dir = fresh_dir("raw_data");
    const auto out_dir = fresh_dir("raw_out");
    const auto cfg = micro_run_config();
    pipeline::write_data_bundle(pipeline::prepare_data(cfg.synth, cfg.split),
                                data_dir);
    pipeline::train_from_config(cfg, data_dir, out_dir);

    const auto bare = fresh_dir("raw_bare");
    std::filesystem::copy_file(out_dir / "checkpoint.bin", bare / "checkpoint.bin");
    const auto res =
        pipeline::evaluate_checkpoint(bare / "checkpoint.bin", data_dir / "val.jsonl");
    CHECK(std::isfinite(res.utterance.mse));
    CHECK(res.utterance.n == 12);

    CHECK_THROWS_AS(pipeline::evaluate_checkpoint(bare / "absent.bin",
                                                  data_dir / "val.jsonl"),
                    PipelineError);

    std::filesystem::remove_all(data_dir);
    std::filesystem::remove_all(out_dir);
    std::filesystem::remove_all(bare);
}
