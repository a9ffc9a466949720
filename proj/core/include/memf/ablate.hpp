#pragma once

#include <string>
#include <vector>

#include "memf/pipeline.hpp"

namespace memf {

struct TopkRow {
    std::size_t k = 0;
    double mse = 0.0;
    double mae = 0.0;
    double rel_mse = 0.0;  // vs the k=1 row
};

struct TopkReport {
    std::vector<TopkRow> rows;
    double base_mse = 0.0;
    std::string to_json(const RunConfig& cfg) const;
    std::string to_csv() const;
};

/// Retrains Fusion once per k in {1..M} with candidate sets truncated to the
/// first k branch outputs, all under the same derived seed; k = M is the
/// unablated pipeline.
TopkReport ablate_topk(const pipeline::PreparedData& data, const pipeline::TrainedKpm& kpm,
                       const BaseForecaster& base, const RunConfig& cfg);

struct LossAblationReport {
    double perm_fused_mse = 0.0;
    double mse_fused_mse = 0.0;
    double perm_diversity = 0.0;  // mean pairwise branch L2 on test pairs
    double mse_diversity = 0.0;
    double base_mse = 0.0;
    std::string to_json(const RunConfig& cfg) const;
};

/// Two KPM trainings differing only in the loss (set-matching vs per-branch
/// identity MSE), same seeds and data, then one Fusion training on each.
LossAblationReport ablate_loss(const pipeline::PreparedData& data, const RunConfig& cfg);

struct GatingReport {
    double gated_mse = 0.0;
    double ungated_mse = 0.0;
    double gated_mae = 0.0;
    double ungated_mae = 0.0;
    double noise_fraction = 0.0;
    std::string to_json(const RunConfig& cfg) const;
};

/// Trains one KPM on a deliberately corrupted knowledge base, then the gated
/// and ungated Fusion variants on identical samples and seeds.
GatingReport ablate_gating(const pipeline::PreparedData& data, const RunConfig& cfg);

} // namespace memf
