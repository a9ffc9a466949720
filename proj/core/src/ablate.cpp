#include "memf/ablate.hpp"

#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace memf {

using pipeline::build_fusion_samples;
using pipeline::evaluate_fused;
using pipeline::run_fusion_training;
using pipeline::run_kpm_training;

TopkReport ablate_topk(const pipeline::PreparedData& data, const pipeline::TrainedKpm& kpm,
                       const BaseForecaster& base, const RunConfig& cfg) {
    const std::size_t M = kpm.config.branches;
    const std::size_t k_max = cfg.k ? cfg.k : M;
    if (k_max > M)
        throw std::invalid_argument("ablate_topk: k " + std::to_string(k_max) + " exceeds M=" +
                                    std::to_string(M));
    TopkReport report;
    for (std::size_t k = 1; k <= k_max; ++k) {
        auto train = build_fusion_samples(data.train, kpm, base, k);
        auto val = build_fusion_samples(data.val, kpm, base, k);
        auto test = build_fusion_samples(data.test, kpm, base, k);
        auto fused = run_fusion_training(train, val, cfg, base, cfg.gated);
        FusionModel model(fused.config);
        auto ev = evaluate_fused(test, model, fused.store, k);
        report.rows.push_back({k, ev.fused.mse, ev.fused.mae, 0.0});
        if (k == 1) report.base_mse = ev.base.mse;
    }
    const double k1 = report.rows.front().mse;
    for (auto& r : report.rows) r.rel_mse = r.mse / k1;
    return report;
}

std::string TopkReport::to_json(const RunConfig& cfg) const {
    nlohmann::json j;
    j["header"] = nlohmann::json::parse(artifact_header_json(cfg, "ablate-topk"));
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"k", r.k}, {"mse", r.mse}, {"mae", r.mae}, {"rel_mse", r.rel_mse}});
    j["rows"] = rows_j;
    j["base_mse"] = base_mse;
    return j.dump(2);
}

std::string TopkReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "k,mse,mae,rel_mse\n";
    for (const auto& r : rows) os << r.k << ',' << r.mse << ',' << r.mae << ',' << r.rel_mse << '\n';
    return os.str();
}

LossAblationReport ablate_loss(const pipeline::PreparedData& data, const RunConfig& cfg) {
    LossAblationReport rep;
    auto base = pipeline::make_forecaster(cfg);

    auto run_one = [&](bool identity_loss, double& fused_mse, double& diversity) {
        auto kpm = run_kpm_training(data, cfg, identity_loss, 0.0);
        diversity = pipeline::branch_diversity(kpm, data.test);
        auto train = build_fusion_samples(data.train, kpm, *base);
        auto val = build_fusion_samples(data.val, kpm, *base);
        auto test = build_fusion_samples(data.test, kpm, *base);
        auto fused = run_fusion_training(train, val, cfg, *base, cfg.gated);
        FusionModel model(fused.config);
        auto ev = evaluate_fused(test, model, fused.store);
        fused_mse = ev.fused.mse;
        rep.base_mse = ev.base.mse;
    };
    run_one(false, rep.perm_fused_mse, rep.perm_diversity);
    run_one(true, rep.mse_fused_mse, rep.mse_diversity);
    return rep;
}

std::string LossAblationReport::to_json(const RunConfig& cfg) const {
    nlohmann::json j;
    j["header"] = nlohmann::json::parse(artifact_header_json(cfg, "ablate-loss"));
    j["perm"] = {{"fused_mse", perm_fused_mse}, {"branch_diversity", perm_diversity}};
    j["mse"] = {{"fused_mse", mse_fused_mse}, {"branch_diversity", mse_diversity}};
    j["base_mse"] = base_mse;
    return j.dump(2);
}

GatingReport ablate_gating(const pipeline::PreparedData& data, const RunConfig& cfg) {
    GatingReport rep;
    rep.noise_fraction = cfg.noise_fraction;
    auto base = pipeline::make_forecaster(cfg);
    auto kpm = run_kpm_training(data, cfg, cfg.kpm_loss == "mse", cfg.noise_fraction);
    auto train = build_fusion_samples(data.train, kpm, *base);
    auto val = build_fusion_samples(data.val, kpm, *base);
    auto test = build_fusion_samples(data.test, kpm, *base);

    auto gated = run_fusion_training(train, val, cfg, *base, true);
    {
        FusionModel model(gated.config);
        auto ev = evaluate_fused(test, model, gated.store);
        rep.gated_mse = ev.fused.mse;
        rep.gated_mae = ev.fused.mae;
    }
    auto plain = run_fusion_training(train, val, cfg, *base, false);
    {
        FusionModel model(plain.config);
        auto ev = evaluate_fused(test, model, plain.store);
        rep.ungated_mse = ev.fused.mse;
        rep.ungated_mae = ev.fused.mae;
    }
    return rep;
}

std::string GatingReport::to_json(const RunConfig& cfg) const {
    nlohmann::json j;
    j["header"] = nlohmann::json::parse(artifact_header_json(cfg, "ablate-gating"));
    j["noise_fraction"] = noise_fraction;
    j["gated"] = {{"mse", gated_mse}, {"mae", gated_mae}};
    j["ungated"] = {{"mse", ungated_mse}, {"mae", ungated_mae}};
    return j.dump(2);
}

} // namespace memf
