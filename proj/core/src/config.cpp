// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "moemos/errors.hpp"

namespace moemos::config {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& obj, const std::set<std::string>& known,
                const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (!known.contains(key)) {
            throw ValidationError(where + ": unknown key '" + key + "'");
        }
    }
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback,
                      const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned()) {
        throw ValidationError(where + "." + key + " must be a nonnegative integer");
    }
    return v.get<std::size_t>();
}

double get_real(const json& obj, const char* key, double fallback,
                const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ValidationError(where + "." + key + " must be a number");
    return v.get<double>();
}

std::string get_string(const json& obj, const char* key, std::string fallback,
                       const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ValidationError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

void parse_synth(const json& j, synth::SynthConfig& c) {
    check_keys(j, {"n_systems", "dim", "per_system", "system_mos", "cluster_sep",
                   "embed_noise", "utterance_noise", "rater_bias_std",
                   "rater_noise_std", "n_raters_train", "n_raters_test",
                   "raters_per_utt"},
               "synth");
    c.n_systems = get_count(j, "n_systems", c.n_systems, "synth");
    c.dim = get_count(j, "dim", c.dim, "synth");
    c.per_system = get_count(j, "per_system", c.per_system, "synth");
    if (j.contains("system_mos")) {
        if (!j.at("system_mos").is_array()) {
            throw ValidationError("synth.system_mos must be an array of numbers");
        }
        c.system_mos = j.at("system_mos").get<std::vector<double>>();
    }
    c.cluster_sep = get_real(j, "cluster_sep", c.cluster_sep, "synth");
    c.embed_noise = get_real(j, "embed_noise", c.embed_noise, "synth");
    c.utterance_noise = get_real(j, "utterance_noise", c.utterance_noise, "synth");
    c.rater_bias_std = get_real(j, "rater_bias_std", c.rater_bias_std, "synth");
    c.rater_noise_std = get_real(j, "rater_noise_std", c.rater_noise_std, "synth");
    c.n_raters_train = get_count(j, "n_raters_train", c.n_raters_train, "synth");
    c.n_raters_test = get_count(j, "n_raters_test", c.n_raters_test, "synth");
    c.raters_per_utt = get_count(j, "raters_per_utt", c.raters_per_utt, "synth");
}

void parse_model(const json& j, model::MoeConfig& c) {
    check_keys(j, {"n_experts", "input_dim", "expert_hidden", "expert_out_dim",
                   "dropout_rate", "n_classes", "gate_hidden"},
               "model");
    c.n_experts = get_count(j, "n_experts", c.n_experts, "model");
    c.input_dim = get_count(j, "input_dim", c.input_dim, "model");
    if (j.contains("expert_hidden")) {
        if (!j.at("expert_hidden").is_array()) {
            throw ValidationError("model.expert_hidden must be an array of widths");
        }
        c.expert_hidden = j.at("expert_hidden").get<std::vector<std::size_t>>();
    }
    c.expert_out_dim = get_count(j, "expert_out_dim", c.expert_out_dim, "model");
    c.dropout_rate = get_real(j, "dropout_rate", c.dropout_rate, "model");
    c.n_classes = get_count(j, "n_classes", c.n_classes, "model");
    c.gate_hidden = get_count(j, "gate_hidden", c.gate_hidden, "model");
}

void parse_loss(const json& j, loss::LossWeights& c) {
    check_keys(j, {"gamma", "lambda1", "lambda2", "epsilon"}, "loss");
    c.gamma = get_real(j, "gamma", c.gamma, "loss");
    c.lambda1 = get_real(j, "lambda1", c.lambda1, "loss");
    c.lambda2 = get_real(j, "lambda2", c.lambda2, "loss");
    c.epsilon = get_real(j, "epsilon", c.epsilon, "loss");
}

void parse_stage(const json& j, train::StageConfig& c, int number) {
    const std::string where = "stages[" + std::to_string(number - 1) + "]";
    check_keys(j, {"stage", "epochs", "lr_max", "batch_size", "dataset_role"}, where);
    if (j.contains("stage")) {
        if (!j.at("stage").is_number_integer() || j.at("stage").get<int>() != number) {
            throw ValidationError(where + ".stage must be " + std::to_string(number));
        }
    }
    c.stage = number;
    c.epochs = get_count(j, "epochs", c.epochs, where);
    c.lr_max = get_real(j, "lr_max", c.lr_max, where);
    c.batch_size = get_count(j, "batch_size", c.batch_size, where);
    c.dataset_role = get_string(j, "dataset_role", c.dataset_role, where);
}

void parse_split(const json& j, data::SplitFractions& c) {
    check_keys(j, {"train", "val", "test"}, "split");
    c.train = get_real(j, "train", c.train, "split");
    c.val = get_real(j, "val", c.val, "split");
    c.test = get_real(j, "test", c.test, "split");
}

} // namespace

void RunConfig::validate() const {
    synth.validate();
    model.validate();
    if (model.expert_hidden.size() < 2) {
        throw ValidationError("model.expert_hidden needs 2 or 3 layers");
    }
    loss.validate();
    for (std::size_t i = 0; i < stages.size(); ++i) {
        stages[i].validate();
        if (stages[i].stage != static_cast<int>(i) + 1) {
            throw ValidationError("stage configs must be ordered 1, 2, 3");
        }
    }
    if (split.train <= 0 || split.val <= 0 || split.test <= 0) {
        throw ValidationError("split fractions must be positive");
    }
    if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1");
    }
    if (model.input_dim != synth.dim) {
        throw ValidationError("model.input_dim must equal synth.dim");
    }
    if (model.n_classes != synth.n_systems) {
        throw ValidationError("model.n_classes must equal synth.n_systems");
    }
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"seed", "data_dir", "out_dir", "synth", "model", "loss",
                   "stages", "split"},
               "config");
    RunConfig c;
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) {
            throw ValidationError("seed must be a nonnegative integer");
        }
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    c.data_dir = get_string(j, "data_dir", c.data_dir, "config");
    c.out_dir = get_string(j, "out_dir", c.out_dir, "config");
    if (j.contains("synth")) parse_synth(j.at("synth"), c.synth);
    if (j.contains("model")) parse_model(j.at("model"), c.model);
    if (j.contains("loss")) parse_loss(j.at("loss"), c.loss);
    if (j.contains("stages")) {
        const auto& st = j.at("stages");
        if (!st.is_array() || st.size() != 3) {
            throw ValidationError("stages must be an array of exactly 3 objects");
        }
        for (int i = 0; i < 3; ++i) {
            parse_stage(st[static_cast<std::size_t>(i)],
                        c.stages[static_cast<std::size_t>(i)], i + 1);
        }
    }
    if (j.contains("split")) parse_split(j.at("split"), c.split);
    // One seed drives everything, including generation.
    c.synth.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["data_dir"] = c.data_dir;
    j["out_dir"] = c.out_dir;
    j["synth"] = {{"n_systems", c.synth.n_systems},
                  {"dim", c.synth.dim},
                  {"per_system", c.synth.per_system},
                  {"system_mos", c.synth.system_mos},
                  {"cluster_sep", c.synth.cluster_sep},
                  {"embed_noise", c.synth.embed_noise},
                  {"utterance_noise", c.synth.utterance_noise},
                  {"rater_bias_std", c.synth.rater_bias_std},
                  {"rater_noise_std", c.synth.rater_noise_std},
                  {"n_raters_train", c.synth.n_raters_train},
                  {"n_raters_test", c.synth.n_raters_test},
                  {"raters_per_utt", c.synth.raters_per_utt}};
    j["model"] = {{"n_experts", c.model.n_experts},
                  {"input_dim", c.model.input_dim},
                  {"expert_hidden", c.model.expert_hidden},
                  {"expert_out_dim", c.model.expert_out_dim},
                  {"dropout_rate", c.model.dropout_rate},
                  {"n_classes", c.model.n_classes},
                  {"gate_hidden", c.model.gate_hidden}};
    j["loss"] = {{"gamma", c.loss.gamma},
                 {"lambda1", c.loss.lambda1},
                 {"lambda2", c.loss.lambda2},
                 {"epsilon", c.loss.epsilon}};
    auto stages = ordered_json::array();
    for (const auto& s : c.stages) {
        stages.push_back({{"stage", s.stage},
                          {"epochs", s.epochs},
                          {"lr_max", s.lr_max},
                          {"batch_size", s.batch_size},
                          {"dataset_role", s.dataset_role}});
    }
    j["stages"] = stages;
    j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
    return j.dump(2) + "\n";
}

} // namespace moemos::config
