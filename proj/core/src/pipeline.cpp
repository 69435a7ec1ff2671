// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "moemos/errors.hpp"

namespace moemos::pipeline {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Substream id for the split permutations, disjoint from synthgen's streams.
constexpr std::uint64_t kSplitStream = 4000;
// Model init substream.
constexpr std::uint64_t kInitStream = 0;

data::Dataset load_labeled(const std::filesystem::path& path) {
    return data::load_manifest(path, /*require_labels=*/true);
}

void write_preprocess(const std::filesystem::path& path, const data::Normalizer& n,
                      const std::vector<std::string>& vocab) {
    ordered_json j;
    j["mean"] = n.mean;
    j["scale"] = n.scale;
    j["system_vocab"] = vocab;
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw PipelineError("failed writing " + path.string());
}

struct Preprocess {
    data::Normalizer normalizer;
    std::vector<std::string> vocab;
};

Preprocess read_preprocess(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    Preprocess p;
    p.normalizer.mean = j.at("mean").get<std::vector<double>>();
    p.normalizer.scale = j.at("scale").get<std::vector<double>>();
    p.vocab = j.at("system_vocab").get<std::vector<std::string>>();
    return p;
}

} // namespace

DataBundle prepare_data(const synth::SynthConfig& cfg,
                        const data::SplitFractions& fractions) {
    auto [base, truth] = synth::generate_dataset(cfg);
    const auto train_scores = synth::simulate_raters(truth, cfg, synth::RaterPool::kTrain);
    const auto test_scores = synth::simulate_raters(truth, cfg, synth::RaterPool::kTest);
    const auto train_labeled = synth::apply_rater_labels(base, train_scores);
    const auto test_labeled = synth::apply_rater_labels(base, test_scores);

    const std::uint64_t split_seed = RngState(cfg.seed).split(kSplitStream).seed();
    const auto idx = data::split_indices(base, fractions, split_seed);

    DataBundle b;
    b.train = data::subset(train_labeled, idx.train);
    b.val = data::subset(train_labeled, idx.val);
    b.test_same = data::subset(train_labeled, idx.test);
    b.test_shift = data::subset(test_labeled, idx.test);
    b.truth = std::move(truth);
    return b;
}

void write_data_bundle(const DataBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto save = [&](const data::Dataset& d, const std::string& stem) {
        data::SaveOptions opts;
        opts.embeddings_filename = stem + "_embeddings.bin";
        data::save_manifest(d, dir / (stem + ".jsonl"), opts);
    };
    save(bundle.train, "train");
    save(bundle.val, "val");
    save(bundle.test_same, "test_same");
    save(bundle.test_shift, "test_shift");
    synth::write_ground_truth(dir / "ground_truth.jsonl", bundle.truth);
}

DataBundle load_data_bundle(const std::filesystem::path& dir) {
    for (const char* stem : {"train", "val", "test_same", "test_shift"}) {
        if (!std::filesystem::exists(dir / (std::string(stem) + ".jsonl"))) {
            throw PipelineError("missing manifest " +
                                (dir / (std::string(stem) + ".jsonl")).string() +
                                " (run the generate command first)");
        }
    }
    DataBundle b;
    b.train = load_labeled(dir / "train.jsonl");
    b.val = load_labeled(dir / "val.jsonl");
    b.test_same = load_labeled(dir / "test_same.jsonl");
    b.test_shift = load_labeled(dir / "test_shift.jsonl");
    if (std::filesystem::exists(dir / "ground_truth.jsonl")) {
        b.truth = synth::read_ground_truth(dir / "ground_truth.jsonl");
    }

    // Class indices must agree across splits even if a small split is missing
    // a system, so rebuild every split over the union vocabulary.
    std::set<std::string> ids;
    for (const auto* d : {&b.train, &b.val, &b.test_same, &b.test_shift}) {
        for (const auto& id : d->system_vocab()) ids.insert(id);
    }
    std::vector<std::string> vocab(ids.begin(), ids.end());
    b.train = data::with_vocab(b.train, vocab);
    b.val = data::with_vocab(b.val, vocab);
    b.test_same = data::with_vocab(b.test_same, vocab);
    b.test_shift = data::with_vocab(b.test_shift, vocab);
    return b;
}

TrainArtifacts train_from_config(const config::RunConfig& cfg,
                                 const std::filesystem::path& data_dir,
                                 const std::filesystem::path& out_dir) {
    cfg.validate();
    const DataBundle bundle = load_data_bundle(data_dir);
    if (bundle.train.dim() != cfg.model.input_dim) {
        throw ValidationError("dataset dim " + std::to_string(bundle.train.dim()) +
                              " does not match model.input_dim");
    }
    if (bundle.train.system_vocab().size() != cfg.model.n_classes) {
        throw ValidationError("dataset has " +
                              std::to_string(bundle.train.system_vocab().size()) +
                              " systems but model.n_classes is " +
                              std::to_string(cfg.model.n_classes));
    }

    const auto normalizer = data::fit_normalizer(bundle.train);
    const auto train_n = data::apply_normalizer(normalizer, bundle.train);
    const auto val_n = data::apply_normalizer(normalizer, bundle.val);

    const auto init =
        model::MoeModel::init(cfg.model, RngState(cfg.seed).split(kInitStream));
    auto result = train::run_full_pipeline(train_n, val_n, cfg.stages, cfg.loss,
                                           init, cfg.seed);

    std::filesystem::create_directories(out_dir);
    TrainArtifacts a;
    a.checkpoint_path = out_dir / "checkpoint.bin";
    a.log_path = out_dir / "training_log.csv";
    a.summary_path = out_dir / "run_summary.json";
    result.model.save(a.checkpoint_path);
    train::write_training_log(a.log_path, result.history);
    write_preprocess(out_dir / "preprocess.json", normalizer,
                     bundle.train.system_vocab());

    a.val_eval = metrics::evaluate_model(result.model, val_n);

    ordered_json summary;
    summary["config"] = json::parse(config::run_config_to_json(cfg));
    summary["epochs_run"] = result.epochs_run;
    summary["stop_reasons"] = result.stop_reasons;
    summary["validation"] = json::parse(
        metrics::eval_result_to_json(a.val_eval, "validation"));
    std::ofstream out(a.summary_path);
    if (!out) throw PipelineError("cannot write " + a.summary_path.string());
    out << summary.dump(2) << "\n";
    if (!out) throw PipelineError("failed writing " + a.summary_path.string());

    a.model = std::move(result.model);
    a.result.history = std::move(result.history);
    a.result.epochs_run = result.epochs_run;
    a.result.stop_reasons = result.stop_reasons;
    return a;
}

metrics::EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                        const std::filesystem::path& manifest) {
    const auto m = model::MoeModel::load(checkpoint);
    auto d = load_labeled(manifest);
    const auto sidecar = checkpoint.parent_path() / "preprocess.json";
    if (std::filesystem::exists(sidecar)) {
        const auto p = read_preprocess(sidecar);
        d = data::with_vocab(d, p.vocab);
        d = data::apply_normalizer(p.normalizer, d);
    }
    return metrics::evaluate_model(m, d);
}

} // namespace moemos::pipeline
