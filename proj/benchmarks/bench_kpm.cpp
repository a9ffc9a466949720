#include <benchmark/benchmark.h>

#include "memf/key_encoder.hpp"
#include "memf/kpm.hpp"

using namespace memf;

static void BM_KpmInferBatch(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    KpmConfig cfg;
    cfg.latent_dim = 64;
    cfg.hidden = 32;
    cfg.branches = 3;
    cfg.horizon = 96;
    cfg.chunk = 24;
    cfg.enc_depth = 1;
    cfg.enc_heads = 4;
    cfg.dec_depth = 1;
    cfg.dec_heads = 4;
    KpmModel model(cfg);
    KeyEncoder enc(96, 64);
    ParamStore store;
    Rng rng(3);
    enc.declare(store, rng);
    model.declare(store, rng);
    Tensor keys({batch, 96});
    for (std::size_t i = 0; i < keys.numel(); ++i) keys[i] = rng.normal();
    for (auto _ : state) {
        Tensor Z = enc.encode_batch(store, keys);
        Tensor out = model.infer_batch(store, Z);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_KpmInferBatch)->Arg(1)->Arg(8)->Arg(32);

static void BM_KpmInferSingle(benchmark::State& state) {
    KpmConfig cfg;
    cfg.latent_dim = 64;
    cfg.hidden = 128;
    cfg.branches = 3;
    cfg.horizon = 96;
    cfg.chunk = 24;
    KpmModel model(cfg);
    ParamStore store;
    Rng rng(4);
    model.declare(store, rng);
    Tensor z({64});
    for (std::size_t i = 0; i < 64; ++i) z[i] = rng.normal();
    for (auto _ : state) {
        auto outs = model.infer(store, z);
        benchmark::DoNotOptimize(outs.data());
    }
}
BENCHMARK(BM_KpmInferSingle);

BENCHMARK_MAIN();
