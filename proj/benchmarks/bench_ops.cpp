#include "extsub/lowrank.hpp"
#include "extsub/ops.hpp"
#include "extsub/parallel.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace es = extsub;

namespace {

es::Matrix random_matrix(std::mt19937_64 & rng, std::size_t rows, std::size_t cols) {
    std::normal_distribution<double> dist;
    es::Matrix m(rows, cols);
    for (double & v : m.data) v = dist(rng);
    return m;
}

es::DeltaModel single_layer(es::Matrix m) {
    es::DeltaModel d;
    d.deltas["layer"] = std::move(m);
    return d;
}

void BM_ext_sub_row(benchmark::State & state) {
    std::mt19937_64 rng(1);
    const std::size_t k = (std::size_t)state.range(0);
    std::normal_distribution<double> dist;
    std::vector<double> vp(k), vm(k);
    for (std::size_t i = 0; i < k; i++) {
        vp[i] = dist(rng);
        vm[i] = dist(rng);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(es::ext_sub_row(vp, vm, 1.0, 1e-12));
    }
    state.SetItemsProcessed((int64_t)state.iterations() * (int64_t)k);
}
BENCHMARK(BM_ext_sub_row)->Arg(64)->Arg(512)->Arg(4096);

void BM_ext_sub_layer(benchmark::State & state) {
    std::mt19937_64 rng(2);
    const auto d = (std::size_t)state.range(0);
    const auto base = single_layer(random_matrix(rng, d, d));
    const auto neg = single_layer(random_matrix(rng, d, d));
    es::UnlearnConfig cfg;
    es::set_thread_count((std::size_t)state.range(1));
    for (auto _ : state) {
        benchmark::DoNotOptimize(es::ext_sub(base, neg, cfg));
    }
    es::set_thread_count(0);
}
BENCHMARK(BM_ext_sub_layer)->Args({256, 1})->Args({256, 4})->Args({1024, 1})->Args({1024, 4});

void BM_svd_truncate(benchmark::State & state) {
    std::mt19937_64 rng(3);
    const auto d = (std::size_t)state.range(0);
    const auto delta = random_matrix(rng, d, d);
    for (auto _ : state) {
        benchmark::DoNotOptimize(es::svd_truncate(delta, 16));
    }
}
BENCHMARK(BM_svd_truncate)->Arg(64)->Arg(128)->Arg(256);

} // namespace

BENCHMARK_MAIN();
