#include <benchmark/benchmark.h>

#include "memf/kernels.hpp"
#include "memf/rng.hpp"

using namespace memf;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t({r, c});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

} // namespace

static void BM_MatmulNT(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Tensor A = random_matrix(rng, n, n);
    Tensor B = random_matrix(rng, n, n);
    for (auto _ : state) {
        Tensor C = kern::matmul_nt(A, B);
        benchmark::DoNotOptimize(C.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatmulNT)->Arg(16)->Arg(64)->Arg(128);

static void BM_AffineRows(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    Tensor X = random_matrix(rng, rows, 64);
    Tensor W = random_matrix(rng, 128, 64);
    Tensor b({128});
    for (auto _ : state) {
        Tensor Y = kern::affine_rows(X, W, b);
        benchmark::DoNotOptimize(Y.data());
    }
}
BENCHMARK(BM_AffineRows)->Arg(8)->Arg(32)->Arg(128);

static void BM_Softmax(benchmark::State& state) {
    Rng rng(3);
    Tensor X = random_matrix(rng, 32, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        Tensor Y = kern::softmax(X, 1.0);
        benchmark::DoNotOptimize(Y.data());
    }
}
BENCHMARK(BM_Softmax)->Arg(8)->Arg(64);

BENCHMARK_MAIN();
