#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace memf {

/// Flat configuration surface for every pipeline stage. Parsed from a
/// sectioned key=value file with strict rejection of unknown keys, then
/// serialized verbatim (as JSON) into every artifact header.
struct RunConfig {
    // [data]
    std::string csv;
    std::string format = "long";  // wide | long
    std::size_t lookback = 96;    // K
    std::size_t horizon = 96;     // V
    std::size_t stride = 1;
    double alpha = 0.7;
    double beta = 0.1;

    // [index]
    std::size_t latent_dim = 64;  // d
    std::size_t n_cells = 0;      // 0: max(1, floor(sqrt(N)))
    std::size_t n_probe = 0;      // 0: max(1, n_cells/8)
    std::size_t index_refresh = 5;

    // [kpm]
    std::size_t hidden = 128;  // d_h
    std::size_t branches = 3;  // M
    std::size_t chunk = 0;     // c; 0: V/4
    std::size_t kpm_enc_depth = 2;
    std::size_t kpm_enc_heads = 4;
    std::size_t kpm_dec_depth = 2;
    std::size_t kpm_dec_heads = 4;
    double kpm_lr = 1e-3;
    std::size_t kpm_epochs = 200;
    std::size_t kpm_patience = 10;
    std::size_t kpm_batch = 32;
    std::string kpm_loss = "perm";  // perm | mse

    // [fusion]
    std::size_t token_dim = 128;  // d_f
    double p_mem = 0.3;
    double p_base = 0.1;
    double tau = 1.0;
    std::size_t fusion_depth = 2;
    std::size_t fusion_heads = 4;
    double fusion_lr = 1e-3;
    std::size_t fusion_epochs = 200;
    std::size_t fusion_patience = 10;
    std::size_t fusion_batch = 32;
    bool gated = true;

    // [forecaster]
    std::string forecaster = "linear_patch";  // linear_patch | seasonal_naive
    std::size_t period = 1;
    double lambda = 1e-3;
    std::string pretrain_csv;

    // [synth]
    std::string synth_kind = "bimodal";
    std::size_t n_series = 8;
    std::size_t length = 1200;

    // [bench]
    std::vector<std::size_t> kb_sizes{1000, 10000, 100000};
    std::size_t l_in = 96;
    std::size_t l_out = 96;
    std::size_t bench_batch = 32;
    std::size_t warmup = 8;
    std::size_t reps = 40;

    // [ablate]
    std::string ablate_what = "topk";  // topk | loss | gating
    double noise_fraction = 0.5;

    // [run]
    std::uint64_t seed = 42;
    std::string out = "out";
    std::size_t k = 0;  // retrieval/candidate count override (--k)
    bool plot_data = false;
    bool no_overwrite = false;

    std::size_t effective_chunk() const;
    std::string to_json() const;
    static RunConfig from_json(const std::string& s);

    /// Strict sectioned key=value parse; unknown sections or keys throw.
    static RunConfig from_file(const std::string& path);
};

/// Header placed in every artifact: config + tool version + seed.
std::string artifact_header_json(const RunConfig& cfg, const std::string& stage);

inline constexpr const char* kToolVersion = "0.1.0";

} // namespace memf
