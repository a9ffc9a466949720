#pragma once

#include <string>
#include <vector>

#include "memf/tensor.hpp"

namespace memf {

/// Pooled point-wise errors plus a per-horizon-step breakdown.
struct MetricReport {
    double mse = 0.0;
    double mae = 0.0;
    std::vector<double> per_horizon_mse;
    std::vector<double> per_horizon_mae;
    std::size_t samples = 0;
};

/// mse = mean((p - y)^2), mae = mean(|p - y|) over every point of every
/// sample. Throws on empty input or shape mismatch.
MetricReport compute_metrics(const std::vector<Tensor>& predictions,
                             const std::vector<Tensor>& targets);

std::string metrics_to_json(const MetricReport& r);

} // namespace memf
