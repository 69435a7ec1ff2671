// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "moemos/config.hpp"
#include "moemos/errors.hpp"
#include "moemos/metrics.hpp"
#include "moemos/pipeline.hpp"
#include "moemos/train.hpp"

namespace moemos::cli {
namespace {

constexpr double kGradTolerance = 1e-4;

config::RunConfig load_or_default(const std::string& path) {
    if (path.empty()) {
        config::RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    return config::load_run_config(path);
}

void override_seed(config::RunConfig& cfg, const std::optional<std::uint64_t>& seed) {
    if (seed) {
        cfg.seed = *seed;
        cfg.synth.seed = *seed;
    }
}

int cmd_generate(const config::RunConfig& cfg, const std::string& out_dir) {
    const auto dir = out_dir.empty() ? cfg.data_dir : out_dir;
    const auto bundle = pipeline::prepare_data(cfg.synth, cfg.split);
    pipeline::write_data_bundle(bundle, dir);
    std::cerr << "generated " << bundle.train.size() << " train / " << bundle.val.size()
              << " val / " << bundle.test_same.size() << " test samples into " << dir
              << "\n";
    return 0;
}

int cmd_train(const config::RunConfig& cfg, const std::string& data_dir,
              const std::string& out_dir) {
    const auto data = data_dir.empty() ? cfg.data_dir : data_dir;
    const auto out = out_dir.empty() ? cfg.out_dir : out_dir;
    const auto artifacts = pipeline::train_from_config(cfg, data, out);
    for (std::size_t i = 0; i < 3; ++i) {
        std::cerr << "stage " << (i + 1) << ": " << artifacts.result.epochs_run[i]
                  << " epochs (" << artifacts.result.stop_reasons[i] << ")\n";
    }
    std::cerr << "checkpoint written to " << artifacts.checkpoint_path.string() << "\n";
    std::cout << metrics::eval_result_to_json(artifacts.val_eval, "validation");
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& manifest,
                 const std::string& out_path, std::string name) {
    if (name.empty()) name = std::filesystem::path(manifest).stem().string();
    const auto result = pipeline::evaluate_checkpoint(checkpoint, manifest);
    if (out_path.empty()) {
        std::cout << metrics::eval_result_to_json(result, name);
    } else {
        metrics::write_eval_result(out_path, result, name);
        std::cerr << "report written to " << out_path << "\n";
    }
    return 0;
}

int cmd_rank(const std::vector<std::string>& files, const std::string& level) {
    std::vector<metrics::RankEntry> utterance, system;
    for (const auto& f : files) {
        const auto r = metrics::read_eval_result(f);
        utterance.push_back({r.name, r.utterance});
        system.push_back({r.name, r.system});
    }
    if (level == "utterance" || level == "both") {
        std::cout << metrics::render_rank_table(utterance, "utterance");
        if (level == "both") std::cout << "\n";
    }
    if (level == "system" || level == "both") {
        std::cout << metrics::render_rank_table(system, "system");
    }
    return 0;
}

int cmd_grad_check(const config::RunConfig& cfg) {
    // A small un-normalized synthetic batch; gradient correctness does not
    // depend on the data distribution.
    synth::SynthConfig small = cfg.synth;
    small.per_system = 4;
    auto [batch, truth] = synth::generate_dataset(small);
    auto m = model::MoeModel::init(cfg.model, RngState(cfg.seed).split(0));
    const double err = train::grad_check(m, batch, cfg.loss);
    std::cout << "max relative gradient error: " << err << "\n";
    if (err > kGradTolerance) {
        std::cerr << "gradient check failed: " << err << " > " << kGradTolerance << "\n";
        return 2;
    }
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"mixture-of-experts MOS prediction over precomputed speech embeddings"};
    app.require_subcommand(1);

    std::string gen_config, gen_out;
    std::optional<std::uint64_t> gen_seed;
    auto* gen = app.add_subcommand("generate", "generate the synthetic dataset files");
    gen->add_option("--config", gen_config, "run config (JSON, // comments allowed)")
        ->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "output directory (default: config data_dir)");
    gen->add_option("--seed", gen_seed, "override the config seed");

    std::string train_config, train_data, train_out;
    std::optional<std::uint64_t> train_seed;
    auto* tr = app.add_subcommand("train", "run the three-stage training pipeline");
    tr->add_option("--config", train_config, "run config (JSON, // comments allowed)")
        ->check(CLI::ExistingFile);
    tr->add_option("--data", train_data, "dataset directory (default: config data_dir)");
    tr->add_option("--out", train_out, "output directory (default: config out_dir)");
    tr->add_option("--seed", train_seed, "override the config seed");

    std::string eval_checkpoint, eval_data, eval_out, eval_name;
    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a manifest");
    ev->add_option("--checkpoint", eval_checkpoint, "model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--data", eval_data, "dataset manifest (JSON lines)")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--out", eval_out, "report path (default: stdout)");
    ev->add_option("--name", eval_name, "system name in the report (default: manifest stem)");

    std::vector<std::string> rank_files;
    std::string rank_level = "both";
    auto* rk = app.add_subcommand("rank", "rank evaluation reports into a table");
    rk->add_option("reports", rank_files, "report JSON files")
        ->required()
        ->check(CLI::ExistingFile);
    rk->add_option("--level", rank_level, "utterance, system or both")
        ->check(CLI::IsMember({"utterance", "system", "both"}));

    std::string gc_config;
    auto* gc = app.add_subcommand("grad-check",
                                  "verify analytic gradients against finite differences");
    gc->add_option("--config", gc_config, "run config (JSON, // comments allowed)")
        ->check(CLI::ExistingFile);

    std::vector<const char*> argv;
    argv.push_back("moemos");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) {
            auto cfg = load_or_default(gen_config);
            override_seed(cfg, gen_seed);
            return cmd_generate(cfg, gen_out);
        }
        if (tr->parsed()) {
            auto cfg = load_or_default(train_config);
            override_seed(cfg, train_seed);
            return cmd_train(cfg, train_data, train_out);
        }
        if (ev->parsed()) {
            return cmd_evaluate(eval_checkpoint, eval_data, eval_out, eval_name);
        }
        if (rk->parsed()) {
            return cmd_rank(rank_files, rank_level);
        }
        if (gc->parsed()) {
            return cmd_grad_check(load_or_default(gc_config));
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace moemos::cli
