#include <benchmark/benchmark.h>

#include <vector>

#include "moemos/kernels.hpp"
#include "moemos/loss.hpp"
#include "moemos/metrics.hpp"
#include "moemos/model.hpp"
#include "moemos/rng.hpp"

namespace {

std::vector<double> random_vec(std::size_t n, moemos::RngState& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.next_normal();
  return v;
}

void BM_SoftmaxGate(benchmark::State& state) {
  moemos::RngState rng(1);
  const auto logits = random_vec(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) {
    auto g = moemos::softmax(logits);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_SoftmaxGate)->Arg(4)->Arg(16)->Arg(64);

void BM_ModelForward(benchmark::State& state) {
  moemos::model::MoeConfig cfg;
  cfg.n_experts = static_cast<std::size_t>(state.range(0));
  auto model = moemos::model::MoeModel::init(cfg, moemos::RngState(7));
  moemos::RngState rng(11);
  const auto x = random_vec(cfg.input_dim, rng);
  for (auto _ : state) {
    auto out = model.forward(x, moemos::model::Mode::kEval, rng);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_ModelForward)->Arg(2)->Arg(4)->Arg(8);

void BM_ModelTrainStep(benchmark::State& state) {
  moemos::model::MoeConfig cfg;
  auto model = moemos::model::MoeModel::init(cfg, moemos::RngState(7));
  moemos::RngState rng(11);
  const auto x = random_vec(cfg.input_dim, rng);
  moemos::loss::LossWeights w;
  for (auto _ : state) {
    moemos::model::ForwardTrace trace;
    auto out = model.forward(x, moemos::model::Mode::kTrain, rng, &trace);
    std::vector<moemos::model::ForwardOutput> batch{out};
    moemos::loss::PerSampleGrads grads;
    auto loss =
        moemos::loss::total_loss(batch, std::vector<double>{3.0}, std::vector<std::size_t>{1}, w, &grads);
    benchmark::DoNotOptimize(loss);
    moemos::model::BackwardSignal sig{grads.d_mos[0], grads.d_logits[0], grads.d_gate[0]};
    model.backward(trace, sig);
    model.zero_grad();
  }
}
BENCHMARK(BM_ModelTrainStep);

void BM_KendallTau(benchmark::State& state) {
  moemos::RngState rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n, rng);
  const auto y = random_vec(n, rng);
  for (auto _ : state) {
    auto t = moemos::metrics::kendall_tau_b(x, y);
    benchmark::DoNotOptimize(t);
  }
}
BENCHMARK(BM_KendallTau)->Arg(100)->Arg(1000)->Arg(10000);

void BM_Spearman(benchmark::State& state) {
  moemos::RngState rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n, rng);
  const auto y = random_vec(n, rng);
  for (auto _ : state) {
    auto s = moemos::metrics::spearman(x, y);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_Spearman)->Arg(100)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
