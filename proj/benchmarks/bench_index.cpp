#include <benchmark/benchmark.h>

#include <cmath>

#include "memf/memory_index.hpp"
#include "memf/rng.hpp"

using namespace memf;

namespace {

MemoryIndex make_index(std::size_t n, std::size_t d) {
    Rng rng(7);
    std::vector<MemoryIndex::Entry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        MemoryIndex::Entry e;
        e.latent = Tensor({d});
        for (std::size_t j = 0; j < d; ++j) e.latent[j] = rng.normal();
        e.value = Tensor({16});
        e.series_id = "bench";
        e.channel = 0;
        e.t = i * 32;
        entries.push_back(std::move(e));
    }
    const auto cells = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(n))));
    return MemoryIndex::build(std::move(entries), cells, 16, 8);
}

} // namespace

static void BM_QueryTopk_Probe8th(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    MemoryIndex idx = make_index(n, 64);
    const std::size_t n_probe = std::max<std::size_t>(1, idx.n_cells() / 8);
    Rng rng(9);
    Tensor q({64});
    for (std::size_t j = 0; j < 64; ++j) q[j] = rng.normal();
    LeakageMask mask{"other", 0, 0, 48};
    for (auto _ : state) {
        auto items = idx.query_topk(q, 3, &mask, n_probe);
        benchmark::DoNotOptimize(items.data());
    }
}
BENCHMARK(BM_QueryTopk_Probe8th)->Arg(1000)->Arg(10000)->Arg(100000);

static void BM_QueryTopk_FullProbe(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    MemoryIndex idx = make_index(n, 64);
    Rng rng(9);
    Tensor q({64});
    for (std::size_t j = 0; j < 64; ++j) q[j] = rng.normal();
    for (auto _ : state) {
        auto items = idx.query_topk(q, 3, nullptr, idx.n_cells());
        benchmark::DoNotOptimize(items.data());
    }
}
BENCHMARK(BM_QueryTopk_FullProbe)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
