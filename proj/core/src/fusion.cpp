#include "memf/fusion.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "memf/adam.hpp"
#include "memf/kernels.hpp"

#include "json.hpp"

namespace memf {

void FusionConfig::validate() const {
    if (token_dim == 0 || horizon == 0 || branches < 1)
        throw std::invalid_argument("FusionConfig: zero dimension");
    if (!(p_base >= 0.0 && p_base <= p_mem && p_mem < 1.0))
        throw std::invalid_argument("FusionConfig: need 0 <= p_base <= p_mem < 1");
    if (!(tau > 0.0)) throw std::invalid_argument("FusionConfig: temperature must be positive");
}

std::string FusionConfig::to_json() const {
    nlohmann::json j{{"d_f", token_dim}, {"m", branches}, {"v", horizon},
                     {"p_mem", p_mem},   {"p_base", p_base}, {"tau", tau},
                     {"depth", depth},   {"heads", heads},   {"gated", gated}};
    return j.dump();
}

FusionConfig FusionConfig::from_json(const std::string& s) {
    const auto j = nlohmann::json::parse(s);
    FusionConfig c;
    c.token_dim = j.at("d_f").get<std::size_t>();
    c.branches = j.at("m").get<std::size_t>();
    c.horizon = j.at("v").get<std::size_t>();
    c.p_mem = j.at("p_mem").get<double>();
    c.p_base = j.at("p_base").get<double>();
    c.tau = j.at("tau").get<double>();
    c.depth = j.at("depth").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.gated = j.at("gated").get<bool>();
    return c;
}

FusionModel::FusionModel(FusionConfig cfg)
    : cfg_(cfg), enc_("fus.enc", cfg.token_dim, cfg.heads, cfg.depth) {
    cfg_.validate();
}

void FusionModel::declare(ParamStore& store, Rng& rng) const {
    store.add("fus.mem.w", glorot_uniform(rng, cfg_.token_dim, cfg_.horizon));
    store.add("fus.mem.b", Tensor::zeros({cfg_.token_dim}));
    store.add("fus.base.w", glorot_uniform(rng, cfg_.token_dim, cfg_.horizon));
    store.add("fus.base.b", Tensor::zeros({cfg_.token_dim}));
    // rows 0..M-1 for memory tokens, row M for the base token
    store.add("fus.pos_emb", glorot_uniform(rng, cfg_.branches + 1, cfg_.token_dim));
    enc_.declare(store, rng);
    store.add("fus.score.w", glorot_uniform(rng, 1, cfg_.token_dim));
    store.add("fus.score.b", Tensor::zeros({1}));
    store.add("fus.head.w", glorot_uniform(rng, cfg_.horizon, cfg_.token_dim));
    store.add("fus.head.b", Tensor::zeros({cfg_.horizon}));
    // Zero gate: the untrained fused model equals the base forecaster.
    store.add("fus.gate", Tensor::zeros({cfg_.horizon}));
}

Tape::Var FusionModel::forward(Tape& tape, Binder& bind, Tape::Var base,
                               const std::vector<Tape::Var>& candidates, Rng& dropout_rng,
                               bool train_mode) const {
    const std::size_t k = candidates.size();
    if (k < 1 || k > cfg_.branches)
        throw std::invalid_argument("fusion_forward: candidate count " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(cfg_.branches) + "]");
    if (tape.value(base).numel() != cfg_.horizon)
        throw std::invalid_argument("fusion_forward: base horizon mismatch");
    if (!tape.value(base).all_finite())
        throw std::runtime_error("fusion_forward: non-finite base input");
    for (const auto& c : candidates) {
        if (tape.value(c).numel() != cfg_.horizon)
            throw std::invalid_argument("fusion_forward: candidate horizon mismatch");
        if (!tape.value(c).all_finite())
            throw std::runtime_error("fusion_forward: non-finite candidate input");
    }

    Tape::Var pos = bind("fus.pos_emb");
    std::vector<Tape::Var> tokens;
    tokens.reserve(k + 1);
    for (std::size_t m = 0; m < k; ++m) {
        Tape::Var h = tape.affine(bind("fus.mem.w"), bind("fus.mem.b"), candidates[m]);
        h = tape.dropout(h, cfg_.p_mem, dropout_rng, train_mode);
        tokens.push_back(tape.add(h, tape.row(pos, m)));
    }
    Tape::Var hb = tape.affine(bind("fus.base.w"), bind("fus.base.b"), base);
    hb = tape.dropout(hb, cfg_.p_base, dropout_rng, train_mode);
    tokens.push_back(tape.add(hb, tape.row(pos, cfg_.branches)));

    Tape::Var Z = enc_.forward(tape, bind, tape.stack_rows(tokens));
    std::vector<Tape::Var> scores;
    scores.reserve(k + 1);
    for (std::size_t i = 0; i <= k; ++i)
        scores.push_back(tape.affine(bind("fus.score.w"), bind("fus.score.b"), tape.row(Z, i)));
    Tape::Var w = tape.softmax(tape.concat(scores), cfg_.tau);
    Tape::Var fused_z = tape.weighted_rowsum(Z, w);
    Tape::Var u = tape.affine(bind("fus.head.w"), bind("fus.head.b"), fused_z);
    if (!cfg_.gated) return tape.add(base, u);
    return tape.add(base, tape.mul(bind("fus.gate"), tape.tanh_(u)));
}

ForecastBundle FusionModel::infer(const ParamStore& store, const Tensor& base,
                                  const std::vector<Tensor>& candidates) const {
    const std::size_t k = candidates.size();
    if (k < 1 || k > cfg_.branches)
        throw std::invalid_argument("fusion_forward: candidate count " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(cfg_.branches) + "]");
    if (base.numel() != cfg_.horizon)
        throw std::invalid_argument("fusion_forward: base horizon mismatch");
    if (!base.all_finite()) throw std::runtime_error("fusion_forward: non-finite base input");

    const Tensor& pos = store.at("fus.pos_emb");
    Tensor X({k + 1, cfg_.token_dim});
    for (std::size_t m = 0; m < k; ++m) {
        if (candidates[m].numel() != cfg_.horizon)
            throw std::invalid_argument("fusion_forward: candidate horizon mismatch");
        if (!candidates[m].all_finite())
            throw std::runtime_error("fusion_forward: non-finite candidate input");
        Tensor h = kern::affine_vec(store.at("fus.mem.w"), store.at("fus.mem.b"), candidates[m]);
        for (std::size_t i = 0; i < cfg_.token_dim; ++i)
            X.at(m, i) = h[i] + pos.at(m, i);
    }
    Tensor hb = kern::affine_vec(store.at("fus.base.w"), store.at("fus.base.b"), base);
    for (std::size_t i = 0; i < cfg_.token_dim; ++i)
        X.at(k, i) = hb[i] + pos.at(cfg_.branches, i);

    Tensor Z = enc_.infer(store, X);
    Tensor scores({k + 1});
    for (std::size_t i = 0; i <= k; ++i) {
        Tensor row({cfg_.token_dim});
        for (std::size_t j = 0; j < cfg_.token_dim; ++j) row[j] = Z.at(i, j);
        scores[i] = kern::affine_vec(store.at("fus.score.w"), store.at("fus.score.b"), row)[0];
    }
    Tensor w = kern::softmax(scores, cfg_.tau);
    Tensor fused_z = kern::weighted_rowsum(Z, w);
    Tensor u = kern::affine_vec(store.at("fus.head.w"), store.at("fus.head.b"), fused_z);

    ForecastBundle out;
    out.base = base;
    out.candidates = candidates;
    out.gate_snapshot = store.at("fus.gate");
    out.weights.assign(w.data(), w.data() + w.numel());
    out.fused = base;
    if (cfg_.gated) {
        const Tensor& gate = store.at("fus.gate");
        const Tensor tu = kern::tanh(u);
        for (std::size_t i = 0; i < cfg_.horizon; ++i) out.fused[i] += gate[i] * tu[i];
    } else {
        for (std::size_t i = 0; i < cfg_.horizon; ++i) out.fused[i] += u[i];
    }
    return out;
}

FusionTrainResult train_fusion(const FusionModel& model, ParamStore& store,
                               const std::vector<FusionSample>& train_samples,
                               const std::vector<FusionSample>& val_samples,
                               const FusionTrainHyper& hyper) {
    if (train_samples.empty()) throw std::invalid_argument("train_fusion: no training samples");
    const double inv_v = 1.0 / static_cast<double>(model.config().horizon);
    Rng rng = Rng(hyper.seed).derive("train-fusion");
    Rng drop_rng = Rng(hyper.seed).derive("fusion-dropout");
    AdamConfig adam_cfg;
    adam_cfg.lr = hyper.lr;
    AdamState adam;

    auto val_mse = [&]() {
        if (val_samples.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& s : val_samples)
            acc += kern::sse(model.infer(store, s.base, s.candidates).fused, s.target) * inv_v;
        return acc / static_cast<double>(val_samples.size());
    };

    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    FusionTrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    ParamStore best_params = store;
    std::size_t wait = 0;

    for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
            const std::size_t end = std::min(order.size(), start + hyper.batch);
            GradStore grads;
            for (std::size_t i = start; i < end; ++i) {
                const FusionSample& s = train_samples[order[i]];
                Tape tape;
                Binder bind(tape, store);
                std::vector<Tape::Var> cand_vars;
                cand_vars.reserve(s.candidates.size());
                for (const auto& c : s.candidates) cand_vars.push_back(tape.leaf(c));
                Tape::Var fused =
                    model.forward(tape, bind, tape.leaf(s.base), cand_vars, drop_rng, true);
                Tape::Var loss = tape.scale(tape.sse(fused, tape.leaf(s.target)), inv_v);
                tape.backward(loss);
                tape.collect_param_grads(grads);
                epoch_loss += tape.value(loss)[0];
            }
            grads.scale_all(1.0 / static_cast<double>(end - start));
            adam.update(store, grads, adam_cfg);
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = epoch_loss / static_cast<double>(order.size());
        row.val_loss = val_samples.empty() ? row.train_loss : val_mse();
        result.history.push_back(row);

        if (row.val_loss < best_val - 1e-12) {
            best_val = row.val_loss;
            best_params = store;
            wait = 0;
        } else if (++wait >= hyper.patience) {
            break;
        }
    }
    store = best_params;
    return result;
}

} // namespace memf
