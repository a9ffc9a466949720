#pragma once

#include "memf/nn.hpp"
#include "memf/tape.hpp"

namespace memf {

/// Projects a look-back window into the d-dimensional latent space used for
/// indexing and as the KPM input. Windows are standardized per window (mean
/// removed, std floored at 1e-8) before the projection so retrieval matches
/// shape rather than level. Two-layer feed-forward: K -> d, tanh, d -> d.
class KeyEncoder {
public:
    KeyEncoder() = default;
    KeyEncoder(std::size_t lookback, std::size_t latent_dim);

    void declare(ParamStore& store, Rng& rng) const;

    /// Kernel path; deterministic for a given parameter snapshot.
    Tensor encode(const ParamStore& store, const Tensor& key) const;
    /// Batched kernel path: keys [B x K] -> latents [B x d].
    Tensor encode_batch(const ParamStore& store, const Tensor& keys) const;
    /// Tape path for joint training with the KPM.
    Tape::Var encode(Tape& tape, Binder& bind, const Tensor& key) const;

    std::size_t lookback() const { return lookback_; }
    std::size_t latent_dim() const { return d_; }

    static constexpr const char* kPrefix = "keyenc";

private:
    void check_key(const Tensor& key) const;

    std::size_t lookback_ = 0;
    std::size_t d_ = 0;
};

} // namespace memf
