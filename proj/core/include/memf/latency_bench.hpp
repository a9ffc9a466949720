#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace memf {

/// Setup for the parametric-memory vs retrieval timing comparison. One KPM
/// forward batch is timed against one masked top-k query batch over the same
/// index family.
struct LatencyBenchConfig {
    std::vector<std::size_t> kb_sizes{1000, 10000, 100000};
    std::size_t l_in = 96;
    std::size_t l_out = 96;
    std::size_t batch = 32;
    std::size_t warmup = 8;
    std::size_t reps = 40;  // config error below 3
    std::size_t k = 3;      // retrieval depth; the KPM uses k branches
    std::size_t latent_dim = 64;
    std::uint64_t seed = 42;
};

struct SizeTiming {
    std::size_t kb_size = 0;
    std::size_t n_cells = 0;
    std::size_t n_probe = 0;
    double kpm_mean_ms = 0.0;
    double kpm_std_ms = 0.0;
    double rag_mean_ms = 0.0;
    double rag_std_ms = 0.0;
    double rag_brute_mean_ms = 0.0;
    double rag_brute_std_ms = 0.0;
    double speedup = 0.0;          // rag_mean_ms / kpm_mean_ms
    double kpm_throughput = 0.0;   // batch * 1000 / mean_ms
    double rag_throughput = 0.0;
    std::uint64_t kpm_query_count_delta = 0;  // index queries observed while timing the KPM
    std::vector<double> kpm_raw_ms;
    std::vector<double> rag_raw_ms;
    std::vector<double> rag_brute_raw_ms;
};

struct LatencyReport {
    LatencyBenchConfig config;
    std::vector<SizeTiming> sizes;

    std::string to_json() const;
    std::string raw_csv() const;
    /// Tidy long-format rows for external plotting.
    std::string plot_csv() const;
};

/// Builds synthetic index families and a randomly initialized bench KPM, then
/// times both paths on a steady clock (single thread). The KPM path performs
/// zero index queries; the per-size counter delta in the report proves it.
LatencyReport bench_latency(const LatencyBenchConfig& cfg);

} // namespace memf
