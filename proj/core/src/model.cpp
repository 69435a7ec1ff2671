// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#include "moemos/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "moemos/errors.hpp"
#include "moemos/kernels.hpp"

namespace moemos::model {
namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& o, std::uint32_t v) {
    std::array<unsigned char, 4> b;
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b.data()), b.size());
}

void write_f64(std::ostream& o, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<unsigned char, 8> b;
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    o.write(reinterpret_cast<const char*>(b.data()), b.size());
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    std::array<unsigned char, 4> b;
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
        throw PipelineError(std::string("truncated checkpoint while reading ") + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& in, const char* what) {
    std::array<unsigned char, 8> b;
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
        throw PipelineError(std::string("truncated checkpoint while reading ") + what);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

void fill_xavier(ParamTensor& w, RngState& rng) {
    const double fan_in = static_cast<double>(w.cols());
    const double fan_out = static_cast<double>(w.rows());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.values) {
        v = (2.0 * rng.next_unit() - 1.0) * limit;
    }
}

void check_input(std::span<const double> x, std::size_t dim) {
    if (x.size() != dim) {
        throw ValidationError("model input length " + std::to_string(x.size()) +
                              " does not match input_dim " + std::to_string(dim));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw ValidationError("model input has a non-finite value");
    }
}

} // namespace

void MoeConfig::validate() const {
    if (n_experts < 2) throw ValidationError("n_experts must be at least 2");
    if (input_dim < 1) throw ValidationError("input_dim must be positive");
    // Zero hidden layers is a degenerate configuration kept for gradient
    // tests; config files additionally restrict the length to 2 or 3.
    if (expert_hidden.size() > 3) {
        throw ValidationError("expert_hidden supports at most 3 layers");
    }
    for (std::size_t w : expert_hidden) {
        if (w < 1) throw ValidationError("expert_hidden widths must be positive");
    }
    if (expert_out_dim < 1) throw ValidationError("expert_out_dim must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw ValidationError("dropout_rate must lie in [0,1)");
    }
    if (n_classes < 2) throw ValidationError("n_classes must be at least 2");
}

MoeModel MoeModel::init(const MoeConfig& cfg, const RngState& rng) {
    cfg.validate();
    MoeModel m;
    m.cfg_ = cfg;
    const std::size_t n = cfg.n_experts;
    const std::size_t d = cfg.input_dim;
    const std::size_t h = cfg.expert_out_dim;

    RngState gate_rng = rng.split(0);
    if (cfg.gate_hidden > 0) {
        m.gate_h_w_ = ParamTensor::matrix("gate.h.W", cfg.gate_hidden, d);
        m.gate_h_b_ = ParamTensor::vector("gate.h.b", cfg.gate_hidden);
        fill_xavier(m.gate_h_w_, gate_rng);
        m.gate_w_ = ParamTensor::matrix("gate.W", n, cfg.gate_hidden);
    } else {
        m.gate_w_ = ParamTensor::matrix("gate.W", n, d);
    }
    m.gate_b_ = ParamTensor::vector("gate.b", n);
    fill_xavier(m.gate_w_, gate_rng);

    m.experts_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngState er = rng.split(1 + i);
        std::size_t in_dim = d;
        const std::string prefix = "expert" + std::to_string(i) + ".l";
        for (std::size_t l = 0; l < cfg.expert_hidden.size(); ++l) {
            const std::size_t out_dim = cfg.expert_hidden[l];
            auto w = ParamTensor::matrix(prefix + std::to_string(l) + ".W", out_dim, in_dim);
            fill_xavier(w, er);
            m.experts_[i].push_back(std::move(w));
            m.experts_[i].push_back(
                ParamTensor::vector(prefix + std::to_string(l) + ".b", out_dim));
            in_dim = out_dim;
        }
        const std::string out_name = prefix + std::to_string(cfg.expert_hidden.size());
        auto w = ParamTensor::matrix(out_name + ".W", h, in_dim);
        fill_xavier(w, er);
        m.experts_[i].push_back(std::move(w));
        m.experts_[i].push_back(ParamTensor::vector(out_name + ".b", h));
    }

    RngState mos_rng = rng.split(1 + n);
    m.mos_w_ = ParamTensor::matrix("mos_head.W", 1, h);
    m.mos_b_ = ParamTensor::vector("mos_head.b", 1);
    fill_xavier(m.mos_w_, mos_rng);

    RngState cls_rng = rng.split(2 + n);
    m.cls_w_ = ParamTensor::matrix("cls_head.W", cfg.n_classes, h);
    m.cls_b_ = ParamTensor::vector("cls_head.b", cfg.n_classes);
    fill_xavier(m.cls_w_, cls_rng);
    return m;
}

std::vector<double> MoeModel::gate_forward(std::span<const double> x) const {
    check_input(x, cfg_.input_dim);
    if (cfg_.gate_hidden > 0) {
        const auto pre = linear_forward(x, gate_h_w_, gate_h_b_);
        const auto act = relu(pre);
        return softmax(linear_forward(act, gate_w_, gate_b_));
    }
    return softmax(linear_forward(x, gate_w_, gate_b_));
}

std::vector<double> MoeModel::expert_forward_traced(std::size_t i,
                                                    std::span<const double> x,
                                                    Mode mode, RngState& rng,
                                                    ForwardTrace* trace) const {
    const auto& layers = experts_[i];
    const std::size_t n_hidden = cfg_.expert_hidden.size();
    std::vector<double> act(x.begin(), x.end());
    for (std::size_t l = 0; l < n_hidden; ++l) {
        auto pre = linear_forward(act, layers[2 * l], layers[2 * l + 1]);
        act = relu(pre);
        std::vector<double> mask;
        if (mode == Mode::kTrain && cfg_.dropout_rate > 0.0) {
            mask = dropout_mask(act.size(), cfg_.dropout_rate, rng);
            for (std::size_t k = 0; k < act.size(); ++k) act[k] *= mask[k];
        }
        if (trace) {
            trace->expert_pre[i].push_back(std::move(pre));
            trace->expert_act[i].push_back(act);
            trace->expert_mask[i].push_back(std::move(mask));
        }
    }
    return linear_forward(act, layers[2 * n_hidden], layers[2 * n_hidden + 1]);
}

std::vector<double> MoeModel::expert_forward(std::size_t i, std::span<const double> x,
                                             Mode mode, RngState& rng) const {
    if (i >= cfg_.n_experts) {
        throw ValidationError("expert index " + std::to_string(i) + " out of range");
    }
    check_input(x, cfg_.input_dim);
    return expert_forward_traced(i, x, mode, rng, nullptr);
}

ForwardOutput MoeModel::forward(std::span<const double> x, Mode mode, RngState& rng,
                                ForwardTrace* trace) const {
    check_input(x, cfg_.input_dim);
    const std::size_t n = cfg_.n_experts;

    if (trace) {
        trace->input.assign(x.begin(), x.end());
        trace->expert_pre.assign(n, {});
        trace->expert_act.assign(n, {});
        trace->expert_mask.assign(n, {});
        trace->expert_out.assign(n, {});
    }

    std::vector<double> gate_weights;
    if (cfg_.gate_hidden > 0) {
        auto pre = linear_forward(x, gate_h_w_, gate_h_b_);
        auto act = relu(pre);
        auto gpre = linear_forward(act, gate_w_, gate_b_);
        gate_weights = softmax(gpre);
        if (trace) {
            trace->gate_hidden_pre = std::move(pre);
            trace->gate_hidden_act = std::move(act);
            trace->gate_pre = std::move(gpre);
        }
    } else {
        auto gpre = linear_forward(x, gate_w_, gate_b_);
        gate_weights = softmax(gpre);
        if (trace) trace->gate_pre = std::move(gpre);
    }

    std::vector<double> mixed(cfg_.expert_out_dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto out = expert_forward_traced(i, x, mode, rng, trace);
        for (std::size_t k = 0; k < mixed.size(); ++k) {
            mixed[k] += gate_weights[i] * out[k];
        }
        if (trace) trace->expert_out[i] = out;
    }

    const double mos_raw = linear_forward(mixed, mos_w_, mos_b_)[0];
    auto logits = linear_forward(mixed, cls_w_, cls_b_);

    if (trace) {
        trace->gate_weights = gate_weights;
        trace->mixed_repr = mixed;
        trace->mos_raw = mos_raw;
        trace->class_logits = logits;
    }

    ForwardOutput out;
    out.mos_pred = mode == Mode::kEval ? std::clamp(mos_raw, 1.0, 5.0) : mos_raw;
    out.class_logits = std::move(logits);
    out.gate_weights = std::move(gate_weights);
    out.mixed_repr = std::move(mixed);
    return out;
}

void MoeModel::backward(const ForwardTrace& t, const BackwardSignal& up) {
    const std::size_t n = cfg_.n_experts;
    const std::size_t h = cfg_.expert_out_dim;
    if (up.d_logits.size() != cfg_.n_classes) {
        throw ValidationError("backward: d_logits length mismatch");
    }
    if (!up.d_gate.empty() && up.d_gate.size() != n) {
        throw ValidationError("backward: d_gate length mismatch");
    }

    std::vector<double> d_mixed(h, 0.0);
    std::vector<double> dx(h);
    linear_backward_acc(t.mixed_repr, cls_w_, cls_b_, up.d_logits, dx);
    for (std::size_t k = 0; k < h; ++k) d_mixed[k] += dx[k];
    const std::array<double, 1> d_mos = {up.d_mos};
    linear_backward_acc(t.mixed_repr, mos_w_, mos_b_, d_mos, dx);
    for (std::size_t k = 0; k < h; ++k) d_mixed[k] += dx[k];

    std::vector<double> d_gate(n, 0.0);
    if (!up.d_gate.empty()) d_gate = up.d_gate;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < h; ++k) dot += d_mixed[k] * t.expert_out[i][k];
        d_gate[i] += dot;
    }

    const std::size_t n_hidden = cfg_.expert_hidden.size();
    for (std::size_t i = 0; i < n; ++i) {
        auto& layers = experts_[i];
        std::vector<double> d_out(h);
        for (std::size_t k = 0; k < h; ++k) d_out[k] = t.gate_weights[i] * d_mixed[k];

        std::span<const double> last_in =
            n_hidden > 0 ? std::span<const double>(t.expert_act[i][n_hidden - 1])
                         : std::span<const double>(t.input);
        std::vector<double> d_in(layers[2 * n_hidden].cols());
        linear_backward_acc(last_in, layers[2 * n_hidden], layers[2 * n_hidden + 1],
                            d_out, d_in);
        for (std::size_t l = n_hidden; l-- > 0;) {
            const auto& mask = t.expert_mask[i][l];
            if (!mask.empty()) {
                for (std::size_t k = 0; k < d_in.size(); ++k) d_in[k] *= mask[k];
            }
            const auto d_pre = relu_backward(t.expert_pre[i][l], d_in);
            std::span<const double> in_l =
                l > 0 ? std::span<const double>(t.expert_act[i][l - 1])
                      : std::span<const double>(t.input);
            d_in.assign(layers[2 * l].cols(), 0.0);
            linear_backward_acc(in_l, layers[2 * l], layers[2 * l + 1], d_pre, d_in);
        }
    }

    const auto d_gate_pre = softmax_backward(t.gate_weights, d_gate);
    if (cfg_.gate_hidden > 0) {
        std::vector<double> d_act(cfg_.gate_hidden);
        linear_backward_acc(t.gate_hidden_act, gate_w_, gate_b_, d_gate_pre, d_act);
        const auto d_pre = relu_backward(t.gate_hidden_pre, d_act);
        std::vector<double> d_x(cfg_.input_dim);
        linear_backward_acc(t.input, gate_h_w_, gate_h_b_, d_pre, d_x);
    } else {
        std::vector<double> d_x(cfg_.input_dim);
        linear_backward_acc(t.input, gate_w_, gate_b_, d_gate_pre, d_x);
    }
}

std::vector<ParamTensor*> MoeModel::parameters() {
    std::vector<ParamTensor*> out;
    if (cfg_.gate_hidden > 0) {
        out.push_back(&gate_h_w_);
        out.push_back(&gate_h_b_);
    }
    out.push_back(&gate_w_);
    out.push_back(&gate_b_);
    for (auto& expert : experts_) {
        for (auto& t : expert) out.push_back(&t);
    }
    out.push_back(&mos_w_);
    out.push_back(&mos_b_);
    out.push_back(&cls_w_);
    out.push_back(&cls_b_);
    return out;
}

std::vector<const ParamTensor*> MoeModel::parameters() const {
    auto* self = const_cast<MoeModel*>(this);
    const auto mut = self->parameters();
    return {mut.begin(), mut.end()};
}

void MoeModel::zero_grad() {
    for (auto* t : parameters()) t->zero_grad();
}

void MoeModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(cfg_.n_experts));
    write_u32(out, static_cast<std::uint32_t>(cfg_.input_dim));
    write_u32(out, static_cast<std::uint32_t>(cfg_.expert_hidden.size()));
    for (std::size_t w : cfg_.expert_hidden) {
        write_u32(out, static_cast<std::uint32_t>(w));
    }
    write_u32(out, static_cast<std::uint32_t>(cfg_.expert_out_dim));
    write_f64(out, cfg_.dropout_rate);
    write_u32(out, static_cast<std::uint32_t>(cfg_.n_classes));
    write_u32(out, static_cast<std::uint32_t>(cfg_.gate_hidden));
    for (const auto* t : parameters()) {
        write_u32(out, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d : t->shape) write_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t->values) write_f64(out, v);
    }
    if (!out) throw PipelineError("failed writing checkpoint " + path.string());
}

MoeModel MoeModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open checkpoint " + path.string());
    char magic[4];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, 4) != 0) {
        throw PipelineError(path.string() + " is not a model checkpoint (bad magic)");
    }
    const auto version = read_u32(in, "version");
    if (version != kVersion) {
        throw PipelineError(path.string() + ": unsupported checkpoint version " +
                            std::to_string(version));
    }
    MoeConfig cfg;
    cfg.n_experts = read_u32(in, "n_experts");
    cfg.input_dim = read_u32(in, "input_dim");
    const auto n_hidden = read_u32(in, "hidden layer count");
    cfg.expert_hidden.clear();
    for (std::uint32_t i = 0; i < n_hidden; ++i) {
        cfg.expert_hidden.push_back(read_u32(in, "hidden width"));
    }
    cfg.expert_out_dim = read_u32(in, "expert_out_dim");
    cfg.dropout_rate = read_f64(in, "dropout_rate");
    cfg.n_classes = read_u32(in, "n_classes");
    cfg.gate_hidden = read_u32(in, "gate_hidden");
    cfg.validate();

    MoeModel m = MoeModel::init(cfg, RngState(0));
    for (auto* t : m.parameters()) {
        const auto rank = read_u32(in, "tensor rank");
        if (rank != t->rank()) {
            throw PipelineError(path.string() + ": tensor " + t->name + " rank mismatch");
        }
        for (std::size_t d = 0; d < t->rank(); ++d) {
            const auto dim = read_u32(in, "tensor dim");
            if (dim != t->shape[d]) {
                throw PipelineError(path.string() + ": tensor " + t->name + " shape mismatch");
            }
        }
        for (double& v : t->values) v = read_f64(in, "tensor values");
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw PipelineError(path.string() + ": trailing bytes after tensors");
    }
    return m;
}

Utilization expert_utilization(const std::vector<std::vector<double>>& gates) {
    if (gates.empty()) throw ValidationError("expert_utilization: empty batch");
    const std::size_t n = gates.front().size();
    if (n == 0) throw ValidationError("expert_utilization: empty gate rows");
    Utilization u;
    u.mean_weight.assign(n, 0.0);
    u.argmax_frequency.assign(n, 0.0);
    for (const auto& g : gates) {
        if (g.size() != n) throw ValidationError("expert_utilization: ragged rows");
        std::size_t best = 0;
        for (std::size_t i = 0; i < n; ++i) {
            u.mean_weight[i] += g[i];
            if (g[i] > g[best]) best = i; // strict: ties stay at the lowest index
        }
        u.argmax_frequency[best] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(gates.size());
    for (double& v : u.mean_weight) v *= inv;
    for (double& v : u.argmax_frequency) v *= inv;
    return u;
}

} // namespace moemos::model
