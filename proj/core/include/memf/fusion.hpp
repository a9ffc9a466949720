#pragma once

#include <string>
#include <vector>

#include "memf/kpm.hpp"
#include "memf/nn.hpp"

namespace memf {

struct FusionConfig {
    std::size_t token_dim = 128;  // d_f
    std::size_t branches = 3;     // M memory candidates
    std::size_t horizon = 0;      // V
    double p_mem = 0.3;           // dropout on memory tokens
    double p_base = 0.1;          // dropout on the base token (p_base <= p_mem)
    double tau = 1.0;             // pooling temperature
    std::size_t depth = 2;
    std::size_t heads = 4;
    bool gated = true;  // ablation switch: false drops the gate and the tanh

    void validate() const;
    std::string to_json() const;
    static FusionConfig from_json(const std::string& j);
};

/// Per-query output of the fusion head.
struct ForecastBundle {
    Tensor base;
    std::vector<Tensor> candidates;
    Tensor fused;
    std::vector<double> weights;  // pooling weights, one per token, sum to 1
    Tensor gate_snapshot;         // [V]
};

/// Adaptive Fusion: memory candidates and the base prediction are projected
/// into a shared token space, pooled with a temperature softmax over a
/// cross-view encoder, and applied as a gated residual on the base forecast.
/// The gate starts at zero, so an untrained model reproduces the base
/// prediction exactly.
class FusionModel {
public:
    explicit FusionModel(FusionConfig cfg);

    void declare(ParamStore& store, Rng& rng) const;

    /// Tape path. Accepts k <= M candidates (truncated sets keep their first-k
    /// positional rows; the base token always uses row M).
    Tape::Var forward(Tape& tape, Binder& bind, Tape::Var base,
                      const std::vector<Tape::Var>& candidates, Rng& dropout_rng,
                      bool train_mode) const;

    /// Kernel path, eval mode (no dropout): bit-identical on repeated calls.
    ForecastBundle infer(const ParamStore& store, const Tensor& base,
                         const std::vector<Tensor>& candidates) const;

    const FusionConfig& config() const { return cfg_; }

private:
    FusionConfig cfg_;
    TransformerStack enc_;
};

struct FusionSample {
    Tensor base;
    std::vector<Tensor> candidates;
    Tensor target;
};

struct FusionTrainHyper {
    double lr = 1e-3;
    std::size_t batch = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
};

struct FusionTrainResult {
    std::vector<EpochRow> history;
};

/// Minimizes mean squared error of the fused output against the target; the
/// base forecaster and the KPM are frozen upstream (their outputs arrive here
/// as plain tensors, so no gradient can reach them).
FusionTrainResult train_fusion(const FusionModel& model, ParamStore& store,
                               const std::vector<FusionSample>& train_samples,
                               const std::vector<FusionSample>& val_samples,
                               const FusionTrainHyper& hyper);

} // namespace memf
