#include "memf/latency_bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "memf/key_encoder.hpp"
#include "memf/kpm.hpp"
#include "memf/memory_index.hpp"

#include "json.hpp"

namespace memf {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Stats {
    double mean = 0.0;
    double stdev = 0.0;
};

Stats summarize(const std::vector<double>& xs) {
    Stats s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(var / static_cast<double>(xs.size()));
    return s;
}

// The timing KPM is deliberately small; the point of the comparison is the
// scaling shape, not the absolute cost of a particular width.
KpmConfig bench_kpm_config(const LatencyBenchConfig& cfg) {
    KpmConfig k;
    k.latent_dim = cfg.latent_dim;
    k.hidden = 32;
    k.branches = cfg.k;
    k.horizon = cfg.l_out;
    k.chunk = cfg.l_out % 4 == 0 ? cfg.l_out / 4 : cfg.l_out;
    k.enc_depth = 1;
    k.enc_heads = 4;
    k.dec_depth = 1;
    k.dec_heads = 4;
    return k;
}

} // namespace

LatencyReport bench_latency(const LatencyBenchConfig& cfg) {
    if (cfg.reps < 3) throw std::invalid_argument("bench_latency: need at least 3 repetitions");
    if (cfg.kb_sizes.empty()) throw std::invalid_argument("bench_latency: no KB sizes");

    LatencyReport report;
    report.config = cfg;

    Rng rng = Rng(cfg.seed).derive("bench");
    const KpmConfig kcfg = bench_kpm_config(cfg);
    KpmModel kpm(kcfg);
    KeyEncoder encoder(cfg.l_in, cfg.latent_dim);
    ParamStore store;
    encoder.declare(store, rng);
    kpm.declare(store, rng);

    // query batch: raw look-back windows, shared across sizes
    Tensor queries({cfg.batch, cfg.l_in});
    for (std::size_t i = 0; i < queries.numel(); ++i) queries[i] = rng.normal();

    // Build every index first, then time the parametric path across all sizes
    // back to back, then the retrieval paths. Grouping like with like keeps
    // slow CPU-state drift out of the per-size comparison.
    std::vector<MemoryIndex> indexes;
    for (std::size_t kb : cfg.kb_sizes) {
        Rng erng = Rng(cfg.seed).derive("bench-entries");  // one distribution for every size
        std::vector<MemoryIndex::Entry> entries;
        entries.reserve(kb);
        for (std::size_t i = 0; i < kb; ++i) {
            MemoryIndex::Entry e;
            e.latent = Tensor({cfg.latent_dim});
            for (std::size_t j = 0; j < cfg.latent_dim; ++j) e.latent[j] = erng.normal();
            e.value = Tensor({cfg.l_out});
            for (std::size_t j = 0; j < cfg.l_out; ++j) e.value[j] = erng.normal();
            e.series_id = "bench";
            e.channel = 0;
            e.t = i * (cfg.l_in + cfg.l_out);
            entries.push_back(std::move(e));
        }
        const auto n_cells = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(kb)))));
        indexes.push_back(MemoryIndex::build(std::move(entries), n_cells, cfg.l_in, 8));

        SizeTiming st;
        st.kb_size = kb;
        st.n_cells = indexes.back().n_cells();
        st.n_probe = std::max<std::size_t>(1, indexes.back().n_cells() / 8);
        report.sizes.push_back(std::move(st));
    }

    // The mask is live but inert: the query identity never collides.
    LeakageMask mask{"bench-query", 0, 0, cfg.l_in + cfg.l_out};
    auto run_kpm = [&]() {
        Tensor Z = encoder.encode_batch(store, queries);
        Tensor out = kpm.infer_batch(store, Z);
        return out[0];  // keep the result alive
    };
    auto run_rag = [&](const MemoryIndex& index, std::size_t probe) {
        Tensor Z = encoder.encode_batch(store, queries);
        double acc = 0.0;
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            Tensor z({cfg.latent_dim});
            for (std::size_t j = 0; j < cfg.latent_dim; ++j) z[j] = Z.at(b, j);
            auto items = index.query_topk(z, cfg.k, &mask, probe);
            acc += items[0].distance;
        }
        return acc;
    };

    // The parametric path is timed once per size per round, round-robin, so
    // slow machine drift lands on every size equally.
    volatile double sink = 0.0;
    std::vector<std::uint64_t> q_before(report.sizes.size());
    for (std::size_t w = 0; w < cfg.warmup; ++w) sink = sink + run_kpm();
    for (std::size_t s = 0; s < report.sizes.size(); ++s)
        q_before[s] = indexes[s].query_count();
    for (std::size_t r = 0; r < cfg.reps; ++r) {
        for (std::size_t s = 0; s < report.sizes.size(); ++s) {
            const auto t0 = Clock::now();
            sink = sink + run_kpm();
            report.sizes[s].kpm_raw_ms.push_back(ms_since(t0));
        }
    }
    for (std::size_t s = 0; s < report.sizes.size(); ++s)
        report.sizes[s].kpm_query_count_delta = indexes[s].query_count() - q_before[s];
    for (std::size_t s = 0; s < report.sizes.size(); ++s) {
        SizeTiming& st = report.sizes[s];
        for (std::size_t w = 0; w < cfg.warmup; ++w) sink = sink + run_rag(indexes[s], st.n_probe);
        for (std::size_t r = 0; r < cfg.reps; ++r) {
            const auto t0 = Clock::now();
            sink = sink + run_rag(indexes[s], st.n_probe);
            st.rag_raw_ms.push_back(ms_since(t0));
        }
        for (std::size_t r = 0; r < cfg.reps; ++r) {
            const auto t0 = Clock::now();
            sink = sink + run_rag(indexes[s], indexes[s].n_cells());
            st.rag_brute_raw_ms.push_back(ms_since(t0));
        }
    }

    for (SizeTiming& st : report.sizes) {
        const Stats ks = summarize(st.kpm_raw_ms);
        const Stats rs = summarize(st.rag_raw_ms);
        const Stats bs = summarize(st.rag_brute_raw_ms);
        st.kpm_mean_ms = ks.mean;
        st.kpm_std_ms = ks.stdev;
        st.rag_mean_ms = rs.mean;
        st.rag_std_ms = rs.stdev;
        st.rag_brute_mean_ms = bs.mean;
        st.rag_brute_std_ms = bs.stdev;
        st.speedup = st.rag_mean_ms / st.kpm_mean_ms;
        st.kpm_throughput = static_cast<double>(cfg.batch) * 1000.0 / st.kpm_mean_ms;
        st.rag_throughput = static_cast<double>(cfg.batch) * 1000.0 / st.rag_mean_ms;
    }
    return report;
}

std::string LatencyReport::to_json() const {
    nlohmann::json j;
    j["config"] = {{"kb_sizes", config.kb_sizes}, {"l_in", config.l_in},
                   {"l_out", config.l_out},       {"batch", config.batch},
                   {"warmup", config.warmup},     {"reps", config.reps},
                   {"k", config.k},               {"latent_dim", config.latent_dim},
                   {"seed", config.seed}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : sizes) {
        rows.push_back({{"kb_size", s.kb_size},
                        {"n_cells", s.n_cells},
                        {"n_probe", s.n_probe},
                        {"kpm_mean_ms", s.kpm_mean_ms},
                        {"kpm_std_ms", s.kpm_std_ms},
                        {"rag_mean_ms", s.rag_mean_ms},
                        {"rag_std_ms", s.rag_std_ms},
                        {"rag_brute_mean_ms", s.rag_brute_mean_ms},
                        {"rag_brute_std_ms", s.rag_brute_std_ms},
                        {"speedup", s.speedup},
                        {"kpm_throughput", s.kpm_throughput},
                        {"rag_throughput", s.rag_throughput},
                        {"kpm_query_count_delta", s.kpm_query_count_delta}});
    }
    j["sizes"] = rows;
    return j.dump(2);
}

std::string LatencyReport::raw_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "kb_size,path,rep,ms\n";
    for (const auto& s : sizes) {
        for (std::size_t r = 0; r < s.kpm_raw_ms.size(); ++r)
            os << s.kb_size << ",kpm," << r << ',' << s.kpm_raw_ms[r] << '\n';
        for (std::size_t r = 0; r < s.rag_raw_ms.size(); ++r)
            os << s.kb_size << ",rag," << r << ',' << s.rag_raw_ms[r] << '\n';
        for (std::size_t r = 0; r < s.rag_brute_raw_ms.size(); ++r)
            os << s.kb_size << ",rag_brute," << r << ',' << s.rag_brute_raw_ms[r] << '\n';
    }
    return os.str();
}

std::string LatencyReport::plot_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "kb_size,path,mean_ms,std_ms,throughput\n";
    for (const auto& s : sizes) {
        os << s.kb_size << ",kpm," << s.kpm_mean_ms << ',' << s.kpm_std_ms << ','
           << s.kpm_throughput << '\n';
        os << s.kb_size << ",rag," << s.rag_mean_ms << ',' << s.rag_std_ms << ','
           << s.rag_throughput << '\n';
        os << s.kb_size << ",rag_brute," << s.rag_brute_mean_ms << ',' << s.rag_brute_std_ms << ','
           << (static_cast<double>(config.batch) * 1000.0 / s.rag_brute_mean_ms) << '\n';
    }
    return os.str();
}

} // namespace memf
