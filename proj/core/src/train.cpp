// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "moemos/errors.hpp"

namespace moemos::train {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxGradNorm = 1.0;

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void require_labels(const data::Dataset& d, const char* which) {
    for (const auto& s : d.samples()) {
        if (!s.mos) {
            throw ValidationError(std::string(which) + " sample " + s.utt_id +
                                  " is missing its mos label");
        }
    }
}

double validation_loss(const model::MoeModel& m, const data::Dataset& val,
                       const loss::LossWeights& w) {
    RngState rng(0); // eval mode draws nothing
    std::vector<model::ForwardOutput> outs;
    std::vector<double> mos;
    std::vector<std::size_t> cls;
    outs.reserve(val.size());
    for (const auto& s : val.samples()) {
        outs.push_back(m.forward(s.embedding, model::Mode::kEval, rng));
        mos.push_back(*s.mos);
        cls.push_back(val.class_index(s.system_id));
    }
    return loss::total_loss(outs, mos, cls, w).total;
}

} // namespace

void StageConfig::validate() const {
    if (stage < 1 || stage > 3) throw ValidationError("stage must be 1, 2 or 3");
    if (!(lr_max > 0)) throw ValidationError("lr_max must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be positive");
    if (dataset_role != "train") {
        throw ValidationError("dataset_role must be 'train'");
    }
}

AdamW::AdamW(std::vector<ParamTensor*> params, double weight_decay, double beta1,
             double beta2, double eps)
    : params_(std::move(params)), weight_decay_(weight_decay), beta1_(beta1),
      beta2_(beta2), eps_(eps) {
    for (const auto* t : params_) {
        m_.emplace_back(t->size(), 0.0);
        v_.emplace_back(t->size(), 0.0);
    }
}

void AdamW::step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t ti = 0; ti < params_.size(); ++ti) {
        ParamTensor& t = *params_[ti];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double g = t.grad[i];
            if (std::isnan(g)) {
                throw PipelineError("NaN gradient in parameter " + t.name);
            }
            t.values[i] -= lr * weight_decay_ * t.values[i];
            m_[ti][i] = beta1_ * m_[ti][i] + (1.0 - beta1_) * g;
            v_[ti][i] = beta2_ * v_[ti][i] + (1.0 - beta2_) * g * g;
            const double m_hat = m_[ti][i] / bc1;
            const double v_hat = v_[ti][i] / bc2;
            t.values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

void AdamW::reset() {
    step_ = 0;
    for (auto& m : m_) std::fill(m.begin(), m.end(), 0.0);
    for (auto& v : v_) std::fill(v.begin(), v.end(), 0.0);
}

double cosine_lr(double lr_max, std::size_t epoch, std::size_t epochs) {
    if (epochs == 0) throw ValidationError("cosine_lr: epochs must be positive");
    if (epoch >= epochs) throw ValidationError("cosine_lr: epoch out of range");
    if (epochs == 1 || epoch == 0) return lr_max;
    const double eta_min = 0.01 * lr_max;
    if (epoch == epochs - 1) return eta_min;
    const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return eta_min + 0.5 * (lr_max - eta_min) * (1.0 + std::cos(kPi * t));
}

double clip_gradients(const std::vector<ParamTensor*>& params, double max_norm) {
    double sq = 0.0;
    for (const auto* t : params) {
        for (double g : t->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto* t : params) {
            for (double& g : t->grad) g *= scale;
        }
    }
    return norm;
}

StageResult run_stage(const model::MoeModel& start, const StageConfig& cfg,
                      const data::Dataset& train_data, const data::Dataset& val_data,
                      const loss::LossWeights& base, RngState& rng) {
    cfg.validate();
    base.validate();
    if (train_data.empty() || val_data.empty()) {
        throw ValidationError("run_stage: datasets must be nonempty");
    }
    require_labels(train_data, "train");
    require_labels(val_data, "validation");

    StageResult res;
    res.model = start;
    if (cfg.epochs == 0) {
        res.stop_reason = "no_epochs";
        return res;
    }

    model::MoeModel current = start;
    const auto params = current.parameters();
    AdamW opt(params);

    const auto [alpha_f, beta_f] =
        loss::task_weight_schedule(cfg.stage, cfg.epochs - 1, cfg.epochs);
    loss::LossWeights val_w = base;
    val_w.alpha = alpha_f;
    val_w.beta = beta_f;

    EarlyStopper stopper;
    model::MoeModel best_model = current;
    const std::size_t n = train_data.size();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(cfg.lr_max, epoch, cfg.epochs);
        const auto [alpha, beta] = loss::task_weight_schedule(cfg.stage, epoch, cfg.epochs);
        loss::LossWeights w = base;
        w.alpha = alpha;
        w.beta = beta;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
            std::swap(order[i - 1], order[j]);
        }

        loss::LossBreakdown sums;
        std::vector<std::vector<double>> gates;
        gates.reserve(n);
        double max_pre = 0.0, max_post = 0.0;

        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, n);
            const std::size_t bs = end - begin;
            current.zero_grad();
            std::vector<model::ForwardOutput> outs;
            std::vector<model::ForwardTrace> traces(bs);
            std::vector<double> mos_t;
            std::vector<std::size_t> cls_t;
            outs.reserve(bs);
            for (std::size_t j = 0; j < bs; ++j) {
                const auto& s = train_data.samples()[order[begin + j]];
                outs.push_back(current.forward(s.embedding, model::Mode::kTrain, rng,
                                               &traces[j]));
                mos_t.push_back(*s.mos);
                cls_t.push_back(train_data.class_index(s.system_id));
            }
            loss::PerSampleGrads g;
            const auto bd = loss::total_loss(outs, mos_t, cls_t, w, &g);
            for (std::size_t j = 0; j < bs; ++j) {
                current.backward(traces[j],
                                 {g.d_mos[j], g.d_logits[j], g.d_gate[j]});
            }
            const double pre = clip_gradients(params, kMaxGradNorm);
            max_pre = std::max(max_pre, pre);
            max_post = std::max(max_post, std::min(pre, kMaxGradNorm));
            opt.step(lr);

            const double scale = static_cast<double>(bs);
            sums.total += bd.total * scale;
            sums.mos += bd.mos * scale;
            sums.classification += bd.classification * scale;
            sums.diversity += bd.diversity * scale;
            sums.sparsity += bd.sparsity * scale;
            for (auto& o : outs) gates.push_back(std::move(o.gate_weights));
        }

        EpochLog log;
        log.stage = cfg.stage;
        log.epoch = epoch;
        log.alpha = alpha;
        log.beta = beta;
        const double inv_n = 1.0 / static_cast<double>(n);
        log.train_loss = {sums.total * inv_n, sums.mos * inv_n,
                          sums.classification * inv_n, sums.diversity * inv_n,
                          sums.sparsity * inv_n};
        log.lr = lr;
        log.max_preclip_norm = max_pre;
        log.max_postclip_norm = max_post;
        log.utilization = model::expert_utilization(gates);

        const double val = validation_loss(current, val_data, val_w);
        if (std::isnan(val)) {
            throw PipelineError("training diverged: stage " + std::to_string(cfg.stage) +
                                " epoch " + std::to_string(epoch) +
                                " validation loss is NaN");
        }
        log.val_loss = val;
        res.history.push_back(std::move(log));
        res.epochs_run = epoch + 1;

        const bool stop = stopper.observe(val);
        if (stopper.improved()) best_model = current;
        if (stop) {
            res.stop_reason = "early_stop";
            break;
        }
    }
    if (res.stop_reason.empty()) res.stop_reason = "completed";
    res.model = std::move(best_model);
    res.best_val_loss = stopper.best;
    return res;
}

PipelineResult run_full_pipeline(const data::Dataset& train_data,
                                 const data::Dataset& val_data,
                                 const std::array<StageConfig, 3>& stages,
                                 const loss::LossWeights& base,
                                 const model::MoeModel& init_model,
                                 std::uint64_t seed) {
    for (std::size_t i = 0; i < 3; ++i) {
        if (stages[i].stage != static_cast<int>(i) + 1) {
            throw ValidationError("stage configs must be ordered 1, 2, 3");
        }
    }
    PipelineResult out;
    out.model = init_model;
    const RngState root(seed);
    for (std::size_t i = 0; i < 3; ++i) {
        RngState stage_rng = root.split(100 + i);
        auto res = run_stage(out.model, stages[i], train_data, val_data, base, stage_rng);
        out.model = std::move(res.model);
        out.epochs_run[i] = res.epochs_run;
        out.stop_reasons[i] = res.stop_reason;
        for (auto& log : res.history) out.history.push_back(std::move(log));
    }
    return out;
}

double grad_check(model::MoeModel& m, const data::Dataset& batch,
                  const loss::LossWeights& w, std::size_t min_params,
                  std::uint64_t seed) {
    if (batch.empty()) throw ValidationError("grad_check: empty batch");
    require_labels(batch, "grad_check");
    std::vector<double> mos;
    std::vector<std::size_t> cls;
    for (const auto& s : batch.samples()) {
        mos.push_back(*s.mos);
        cls.push_back(batch.class_index(s.system_id));
    }

    RngState dummy(0);
    const auto eval_total = [&]() {
        std::vector<model::ForwardOutput> outs;
        outs.reserve(batch.size());
        for (const auto& s : batch.samples()) {
            outs.push_back(m.forward(s.embedding, model::Mode::kGradCheck, dummy));
        }
        return loss::total_loss(outs, mos, cls, w).total;
    };

    m.zero_grad();
    {
        std::vector<model::ForwardOutput> outs;
        std::vector<model::ForwardTrace> traces(batch.size());
        outs.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            outs.push_back(m.forward(batch.samples()[i].embedding,
                                     model::Mode::kGradCheck, dummy, &traces[i]));
        }
        loss::PerSampleGrads g;
        loss::total_loss(outs, mos, cls, w, &g);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            m.backward(traces[i], {g.d_mos[i], g.d_logits[i], g.d_gate[i]});
        }
    }

    const auto params = m.parameters();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto* t : params) analytic.push_back(t->grad);

    std::size_t per_tensor =
        (min_params + params.size() - 1) / std::max<std::size_t>(params.size(), 1);
    per_tensor = std::max<std::size_t>(per_tensor, 1);
    const auto planned = [&](std::size_t k) {
        std::size_t total = 0;
        for (const auto* t : params) total += std::min(k, t->size());
        return total;
    };
    while (planned(per_tensor) < min_params) ++per_tensor;

    RngState rng(seed);
    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
        ParamTensor& t = *params[ti];
        const std::size_t count = std::min(per_tensor, t.size());
        std::set<std::size_t> chosen;
        while (chosen.size() < count) {
            chosen.insert(static_cast<std::size_t>(rng.next_below(t.size())));
        }
        for (std::size_t idx : chosen) {
            const double orig = t.values[idx];
            t.values[idx] = orig + h;
            const double fp = eval_total();
            t.values[idx] = orig - h;
            const double fm = eval_total();
            t.values[idx] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[ti][idx];
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochLog>& history) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write training log " + path.string());
    out << "stage,epoch,alpha,beta,total,mos,classification,diversity,sparsity\n";
    for (const auto& e : history) {
        out << e.stage << ',' << e.epoch << ',' << fmt(e.alpha) << ',' << fmt(e.beta)
            << ',' << fmt(e.train_loss.total) << ',' << fmt(e.train_loss.mos) << ','
            << fmt(e.train_loss.classification) << ',' << fmt(e.train_loss.diversity)
            << ',' << fmt(e.train_loss.sparsity) << '\n';
    }
    if (!out) throw PipelineError("failed writing training log " + path.string());
}

} // namespace moemos::train
