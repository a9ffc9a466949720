#include "memf/metrics.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace memf {

MetricReport compute_metrics(const std::vector<Tensor>& predictions,
                             const std::vector<Tensor>& targets) {
    if (predictions.empty() || predictions.size() != targets.size())
        throw std::invalid_argument("compute_metrics: empty or mismatched inputs");
    const std::size_t V = predictions[0].numel();
    MetricReport r;
    r.per_horizon_mse.assign(V, 0.0);
    r.per_horizon_mae.assign(V, 0.0);
    for (std::size_t s = 0; s < predictions.size(); ++s) {
        if (!predictions[s].same_shape(targets[s]) || predictions[s].numel() != V)
            throw std::invalid_argument("compute_metrics: shape mismatch at sample " +
                                        std::to_string(s));
        for (std::size_t j = 0; j < V; ++j) {
            const double e = predictions[s][j] - targets[s][j];
            r.per_horizon_mse[j] += e * e;
            r.per_horizon_mae[j] += std::fabs(e);
        }
    }
    const double n = static_cast<double>(predictions.size());
    for (std::size_t j = 0; j < V; ++j) {
        r.mse += r.per_horizon_mse[j];
        r.mae += r.per_horizon_mae[j];
        r.per_horizon_mse[j] /= n;
        r.per_horizon_mae[j] /= n;
    }
    r.mse /= n * static_cast<double>(V);
    r.mae /= n * static_cast<double>(V);
    r.samples = predictions.size();
    assert(r.mae * r.mae <= r.mse + 1e-12);
    return r;
}

std::string metrics_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["mse"] = r.mse;
    j["mae"] = r.mae;
    j["samples"] = r.samples;
    j["per_horizon_mse"] = r.per_horizon_mse;
    j["per_horizon_mae"] = r.per_horizon_mae;
    return j.dump(2);
}

} // namespace memf
