#include <benchmark/benchmark.h>

#include <random>

#include "durm/data.hpp"
#include "durm/durm_head.hpp"
#include "durm/instrumentation.hpp"
#include "durm/model.hpp"
#include "durm/numerics.hpp"
#include "durm/rng.hpp"
#include "durm/theory.hpp"
#include "durm/trainer.hpp"

namespace {

durm::Vector random_logits(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 2.0);
    durm::Vector v(n);
    for (double& x : v) x = normal(gen);
    return v;
}

void BM_Softmax(benchmark::State& state) {
    const durm::Vector logits = random_logits(std::size_t(state.range(0)), 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(durm::softmax(logits));
    }
}
BENCHMARK(BM_Softmax)->Arg(5)->Arg(64)->Arg(512);

void BM_ForwardBackward(benchmark::State& state) {
    const std::size_t width = std::size_t(state.range(0));
    const durm::HeadConfig head{3, 2};
    const durm::Mlp model = durm::init_mlp(2, {width}, head.width(), 7);
    const durm::Vector x = {0.3, -1.1};
    const durm::Vector y = durm::pad_label(1, head);
    for (auto _ : state) {
        const durm::ForwardTrace ft = durm::forward(model, x);
        const durm::Vector g =
            durm::grad_logits(durm::softmax(ft.logits), y);
        benchmark::DoNotOptimize(durm::backward(model, ft, g));
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(32)->Arg(128);

void BM_TrainEpoch(benchmark::State& state) {
    const durm::Dataset data =
        durm::gen_blobs(durm::stream_seed(7, durm::kStreamBlobs), 3, 100, 2,
                        5.0, 1.0);
    durm::TrainConfig config;
    config.epochs = 1;
    config.head.num_classes = 3;
    config.head.num_dummy = std::size_t(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(durm::train(data, config));
    }
}
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(2);

void BM_OrderStatsQuadrature(benchmark::State& state) {
    const durm::OrderStatsSpec erm{0.0, 0.5, std::size_t(state.range(0))};
    const durm::OrderStatsSpec dur{0.0, 1.0, std::size_t(state.range(0))};
    for (auto _ : state) {
        benchmark::DoNotOptimize(durm::prob_min_ge(
            erm, dur, durm::ProbMethod::quadrature, 1u << 22, 0));
    }
}
BENCHMARK(BM_OrderStatsQuadrature)->Arg(100)->Arg(100000);

void BM_PowerIteration(benchmark::State& state) {
    const durm::Dataset data =
        durm::gen_blobs(durm::stream_seed(7, durm::kStreamBlobs), 3, 50, 2,
                        5.0, 1.0);
    const durm::HeadConfig head{3, 2};
    const durm::Mlp model = durm::init_mlp(2, {8}, head.width(), 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(durm::estimate_top_hessian_eigenvalue(
            model, data, head, std::size_t(state.range(0)), 1e-4, 8));
    }
}
BENCHMARK(BM_PowerIteration)->Arg(10)->Arg(30);

}  // namespace

BENCHMARK_MAIN();
