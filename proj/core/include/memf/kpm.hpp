#pragma once

#include <functional>
#include <string>
#include <vector>

#include "memf/assignment.hpp"
#include "memf/key_encoder.hpp"
#include "memf/memory_index.hpp"
#include "memf/nn.hpp"
#include "memf/windowing.hpp"

namespace memf {

struct KpmConfig {
    std::size_t latent_dim = 64;   // d, width of the encoded key
    std::size_t hidden = 128;      // d_h
    std::size_t branches = 3;      // M parallel future hypotheses
    std::size_t horizon = 0;       // V
    std::size_t chunk = 0;         // c; defaults to V/4 when 0
    std::size_t enc_depth = 2;
    std::size_t enc_heads = 4;
    std::size_t dec_depth = 2;
    std::size_t dec_heads = 4;

    std::size_t segments() const { return horizon / chunk; }
    void validate() const;
    std::string to_json() const;
    static KpmConfig from_json(const std::string& j);
};

/// Knowledge Persistence Module: a shared context encoding of the latent key
/// conditions M independent decoding branches. Branches share the decoder
/// stack and the linear head but own their per-segment query and positional
/// embeddings, so branch m's output depends only on the context and branch-m
/// embeddings.
class KpmModel {
public:
    explicit KpmModel(KpmConfig cfg);

    void declare(ParamStore& store, Rng& rng) const;

    /// Tape path: latent z (length d) to M horizon vectors.
    std::vector<Tape::Var> forward(Tape& tape, Binder& bind, Tape::Var z) const;

    /// Kernel path, single sample.
    std::vector<Tensor> infer(const ParamStore& store, const Tensor& z) const;

    /// Kernel path over a batch: Z [B x d] -> [B x M*V], branch-major rows.
    /// Projections run as batched GEMMs; per-branch attention blocks stay
    /// independent.
    Tensor infer_batch(const ParamStore& store, const Tensor& Z) const;

    const KpmConfig& config() const { return cfg_; }

private:
    KpmConfig cfg_;
    TransformerStack ctx_;
    TransformerStack dec_;
};

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::size_t skipped = 0;
};

struct RetrievalRecord {
    std::string q_series;
    std::size_t q_channel = 0;
    std::size_t q_t = 0;
    std::size_t span = 0;
    std::string c_series;
    std::size_t c_channel = 0;
    std::size_t c_t = 0;
};

struct KpmTrainHyper {
    double lr = 1e-3;
    std::size_t batch = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    std::size_t index_refresh = 5;  // rebuild the index every R epochs
    std::size_t n_cells = 0;        // 0: max(1, floor(sqrt(N)))
    bool identity_loss = false;     // ablation: per-branch MSE in retrieval order
    bool log_retrievals = false;
    double noise_fraction = 0.0;    // ablation: replace this share of index values with noise
    std::uint64_t seed = 0;
};

struct KpmTrainResult {
    std::vector<EpochRow> history;
    std::vector<RetrievalRecord> retrieval_log;
    std::size_t skipped_samples = 0;
    std::size_t processed_samples = 0;
    std::uint64_t mask_violations = 0;  // in-op leakage assertions observed across all index builds
    MemoryIndex final_index;  // frozen snapshot of the trained encoder's latents
};

/// Joint training of key encoder + KPM against leakage-masked retrieved
/// future sets (k = M targets per query). `store` must hold the declared
/// encoder and model parameters and is updated in place. Early-stops on a
/// validation-loss plateau and restores the best snapshot.
KpmTrainResult train_kpm(const std::vector<WindowPair>& train_pairs,
                         const std::vector<WindowPair>& val_pairs, const KeyEncoder& encoder,
                         const KpmModel& model, ParamStore& store, const KpmTrainHyper& hyper);

std::string history_to_csv(const std::vector<EpochRow>& history);

} // namespace memf
