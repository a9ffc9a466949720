#include "memf/kpm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "memf/adam.hpp"
#include "memf/kernels.hpp"

#include "json.hpp"

namespace memf {

void KpmConfig::validate() const {
    if (latent_dim == 0 || hidden == 0 || horizon == 0)
        throw std::invalid_argument("KpmConfig: zero dimension");
    if (branches < 1) throw std::invalid_argument("KpmConfig: need at least one branch");
    if (chunk == 0 || horizon % chunk != 0)
        throw std::invalid_argument("KpmConfig: horizon " + std::to_string(horizon) +
                                    " must be a multiple of chunk " + std::to_string(chunk));
}

std::string KpmConfig::to_json() const {
    nlohmann::json j{{"d", latent_dim},          {"d_h", hidden},
                     {"m", branches},            {"v", horizon},
                     {"c", chunk},               {"enc_depth", enc_depth},
                     {"enc_heads", enc_heads},   {"dec_depth", dec_depth},
                     {"dec_heads", dec_heads}};
    return j.dump();
}

KpmConfig KpmConfig::from_json(const std::string& s) {
    const auto j = nlohmann::json::parse(s);
    KpmConfig c;
    c.latent_dim = j.at("d").get<std::size_t>();
    c.hidden = j.at("d_h").get<std::size_t>();
    c.branches = j.at("m").get<std::size_t>();
    c.horizon = j.at("v").get<std::size_t>();
    c.chunk = j.at("c").get<std::size_t>();
    c.enc_depth = j.at("enc_depth").get<std::size_t>();
    c.enc_heads = j.at("enc_heads").get<std::size_t>();
    c.dec_depth = j.at("dec_depth").get<std::size_t>();
    c.dec_heads = j.at("dec_heads").get<std::size_t>();
    return c;
}

KpmModel::KpmModel(KpmConfig cfg)
    : cfg_(cfg), ctx_("kpm.ctx", cfg.hidden, cfg.enc_heads, cfg.enc_depth),
      dec_("kpm.dec", cfg.hidden, cfg.dec_heads, cfg.dec_depth) {
    cfg_.validate();
}

void KpmModel::declare(ParamStore& store, Rng& rng) const {
    const std::size_t T = cfg_.segments();
    store.add("kpm.in.w", glorot_uniform(rng, cfg_.hidden, cfg_.latent_dim));
    store.add("kpm.in.b", Tensor::zeros({cfg_.hidden}));
    ctx_.declare(store, rng);
    // Per-branch, per-segment embeddings, rows indexed m*T + t.
    store.add("kpm.query_emb", glorot_uniform(rng, cfg_.branches * T, cfg_.hidden));
    store.add("kpm.pos_emb", glorot_uniform(rng, cfg_.branches * T, cfg_.hidden));
    dec_.declare(store, rng);
    store.add("kpm.head.w", glorot_uniform(rng, cfg_.chunk, cfg_.hidden));
    store.add("kpm.head.b", Tensor::zeros({cfg_.chunk}));
}

std::vector<Tape::Var> KpmModel::forward(Tape& tape, Binder& bind, Tape::Var z) const {
    if (tape.value(z).numel() != cfg_.latent_dim)
        throw std::invalid_argument("kpm_forward: latent width mismatch");
    if (!tape.value(z).all_finite())
        throw std::runtime_error("kpm_forward: non-finite latent input");
    const std::size_t T = cfg_.segments();

    Tape::Var h0 = tape.affine(bind("kpm.in.w"), bind("kpm.in.b"), z);
    Tape::Var ctx_tokens = tape.stack_rows({h0});
    Tape::Var h = tape.row(ctx_.forward(tape, bind, ctx_tokens), 0);

    Tape::Var query = bind("kpm.query_emb");
    Tape::Var pos = bind("kpm.pos_emb");
    std::vector<Tape::Var> outputs;
    outputs.reserve(cfg_.branches);
    for (std::size_t m = 0; m < cfg_.branches; ++m) {
        std::vector<Tape::Var> tokens;
        tokens.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t r = m * T + t;
            tokens.push_back(tape.add(tape.add(h, tape.row(query, r)), tape.row(pos, r)));
        }
        Tape::Var Q = dec_.forward(tape, bind, tape.stack_rows(tokens));
        std::vector<Tape::Var> segs;
        segs.reserve(T);
        for (std::size_t t = 0; t < T; ++t)
            segs.push_back(tape.affine(bind("kpm.head.w"), bind("kpm.head.b"), tape.row(Q, t)));
        outputs.push_back(T == 1 ? segs[0] : tape.concat(segs));
    }
    return outputs;
}

std::vector<Tensor> KpmModel::infer(const ParamStore& store, const Tensor& z) const {
    if (z.numel() != cfg_.latent_dim)
        throw std::invalid_argument("kpm infer: latent width " + std::to_string(z.numel()) +
                                    " != configured d=" + std::to_string(cfg_.latent_dim));
    Tensor Z({1, cfg_.latent_dim});
    for (std::size_t i = 0; i < cfg_.latent_dim; ++i) Z[i] = z[i];
    Tensor flat = infer_batch(store, Z);
    std::vector<Tensor> out;
    out.reserve(cfg_.branches);
    for (std::size_t m = 0; m < cfg_.branches; ++m) {
        Tensor y({cfg_.horizon});
        for (std::size_t i = 0; i < cfg_.horizon; ++i) y[i] = flat[m * cfg_.horizon + i];
        out.push_back(std::move(y));
    }
    return out;
}

Tensor KpmModel::infer_batch(const ParamStore& store, const Tensor& Z) const {
    if (Z.rank() != 2 || Z.cols() != cfg_.latent_dim)
        throw std::invalid_argument("kpm infer: latent batch shape " + Z.shape_str());
    if (!Z.all_finite()) throw std::runtime_error("kpm infer: non-finite latent input");
    const std::size_t B = Z.rows();
    const std::size_t T = cfg_.segments();
    const std::size_t M = cfg_.branches;

    Tensor H = kern::affine_rows(Z, store.at("kpm.in.w"), store.at("kpm.in.b"));  // [B x d_h]
    H = ctx_.infer_batch(store, H, 1);

    const Tensor& query = store.at("kpm.query_emb");
    const Tensor& pos = store.at("kpm.pos_emb");
    Tensor X({B * M * T, cfg_.hidden});
    for (std::size_t b = 0; b < B; ++b) {
        const double* hb = H.data() + b * cfg_.hidden;
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t r = m * T + t;
                double* xr = X.data() + ((b * M + m) * T + t) * cfg_.hidden;
                const double* q = query.data() + r * cfg_.hidden;
                const double* p = pos.data() + r * cfg_.hidden;
                for (std::size_t i = 0; i < cfg_.hidden; ++i) xr[i] = (hb[i] + q[i]) + p[i];
            }
        }
    }
    X = dec_.infer_batch(store, X, T);
    Tensor S = kern::affine_rows(X, store.at("kpm.head.w"), store.at("kpm.head.b"));

    Tensor out({B, M * cfg_.horizon});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < cfg_.chunk; ++j)
                    out.at(b, m * cfg_.horizon + t * cfg_.chunk + j) =
                        S.data()[((b * M + m) * T + t) * cfg_.chunk + j];
    return out;
}

std::string history_to_csv(const std::vector<EpochRow>& history) {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,skipped_samples\n";
    os.precision(17);
    for (const auto& r : history)
        os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.skipped << '\n';
    return os.str();
}

namespace {

std::size_t default_cells(std::size_t n) {
    const auto c = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
    return std::max<std::size_t>(1, c);
}

struct SampleLoss {
    double loss = 0.0;
    bool skipped = false;
};

} // namespace

KpmTrainResult train_kpm(const std::vector<WindowPair>& train_pairs,
                         const std::vector<WindowPair>& val_pairs, const KeyEncoder& encoder,
                         const KpmModel& model, ParamStore& store, const KpmTrainHyper& hyper) {
    if (train_pairs.empty()) throw std::invalid_argument("train_kpm: no training pairs");
    const KpmConfig& cfg = model.config();
    const std::size_t M = cfg.branches;
    const std::size_t span = encoder.lookback() + cfg.horizon;
    const std::size_t n_cells =
        hyper.n_cells ? hyper.n_cells : default_cells(train_pairs.size());

    KpmTrainResult result;
    Rng rng = Rng(hyper.seed).derive("train-kpm");
    AdamConfig adam_cfg;
    adam_cfg.lr = hyper.lr;
    AdamState adam;

    // Noisy-memory ablation: a fixed subset of entry values (same subset on
    // every rebuild, since entry order tracks train_pairs) becomes unit noise.
    auto corrupt = [&](MemoryIndex& idx) {
        if (hyper.noise_fraction <= 0.0) return;
        Rng nrng = Rng(hyper.seed).derive("kb-noise");
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const bool hit = nrng.uniform01() < hyper.noise_fraction;
            Tensor v({cfg.horizon});
            for (std::size_t j = 0; j < cfg.horizon; ++j) v[j] = nrng.normal();
            if (hit) idx.replace_value(i, std::move(v));
        }
    };

    MemoryIndex index = MemoryIndex::build_from_pairs(train_pairs, encoder, store, n_cells);
    corrupt(index);

    // Training retrieval probes every cell: targets must be the exact masked
    // top-k, and the desk-scale index makes the full scan cheap.
    auto retrieve = [&](const WindowPair& p) -> std::vector<RetrievedItem> {
        const Tensor z = encoder.encode(store, p.key);
        LeakageMask mask{p.series_id, p.channel, p.t, span};
        auto items = index.query_topk(z, M, &mask, index.n_cells());
        if (hyper.log_retrievals) {
            for (const auto& it : items)
                result.retrieval_log.push_back(
                    {p.series_id, p.channel, p.t, span, it.series_id, it.channel, it.t});
        }
        return items;
    };

    // Builds the differentiable loss for one sample; assignment is decided on
    // plain values, gradients flow through the chosen pairing only.
    auto sample_loss = [&](const WindowPair& p, Tape& tape, Binder& bind) -> SampleLoss {
        std::vector<RetrievedItem> targets;
        try {
            targets = retrieve(p);
        } catch (const RetrievalError&) {
            return {0.0, true};
        }
        Tape::Var z = encoder.encode(tape, bind, p.key);
        std::vector<Tape::Var> outs = model.forward(tape, bind, z);
        std::vector<std::size_t> perm(M);
        if (hyper.identity_loss) {
            std::iota(perm.begin(), perm.end(), 0);
        } else {
            std::vector<Tensor> out_vals;
            std::vector<Tensor> tgt_vals;
            out_vals.reserve(M);
            tgt_vals.reserve(M);
            for (std::size_t m = 0; m < M; ++m) {
                out_vals.push_back(tape.value(outs[m]));
                tgt_vals.push_back(targets[m].value);
            }
            perm = permutation_loss(out_vals, tgt_vals).perm;
        }
        Tape::Var loss;
        for (std::size_t m = 0; m < M; ++m) {
            Tape::Var term = tape.sse(outs[m], tape.leaf(targets[perm[m]].value));
            loss = m == 0 ? term : tape.add(loss, term);
        }
        tape.backward(loss);
        return {tape.value(loss)[0], false};
    };

    auto eval_loss = [&](const std::vector<WindowPair>& pairs, std::size_t* skipped) -> double {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& p : pairs) {
            std::vector<RetrievedItem> targets;
            try {
                targets = retrieve(p);
            } catch (const RetrievalError&) {
                if (skipped) ++(*skipped);
                continue;
            }
            const Tensor z = encoder.encode(store, p.key);
            std::vector<Tensor> outs = model.infer(store, z);
            double loss;
            if (hyper.identity_loss) {
                loss = 0.0;
                for (std::size_t m = 0; m < M; ++m) loss += kern::sse(outs[m], targets[m].value);
            } else {
                std::vector<Tensor> tgt_vals;
                tgt_vals.reserve(M);
                for (const auto& it : targets) tgt_vals.push_back(it.value);
                loss = permutation_loss(outs, tgt_vals).loss;
            }
            total += loss;
            ++n;
        }
        return n ? total / static_cast<double>(n) : 0.0;
    };

    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);

    double best_val = std::numeric_limits<double>::infinity();
    ParamStore best_params = store;
    std::size_t wait = 0;

    for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
        if (epoch > 1 && hyper.index_refresh > 0 && (epoch - 1) % hyper.index_refresh == 0) {
            result.mask_violations += index.mask_violations();
            index = MemoryIndex::build_from_pairs(train_pairs, encoder, store, n_cells);
            corrupt(index);
        }

        // Fisher-Yates on the deterministic stream
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_loss = 0.0;
        std::size_t epoch_used = 0, epoch_skipped = 0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
            const std::size_t end = std::min(order.size(), start + hyper.batch);
            GradStore grads;
            std::size_t used = 0;
            for (std::size_t i = start; i < end; ++i) {
                Tape tape;
                Binder bind(tape, store);
                SampleLoss s = sample_loss(train_pairs[order[i]], tape, bind);
                if (s.skipped) {
                    ++epoch_skipped;
                    continue;
                }
                tape.collect_param_grads(grads);
                epoch_loss += s.loss;
                ++used;
            }
            if (used == 0) continue;
            grads.scale_all(1.0 / static_cast<double>(used));
            adam.update(store, grads, adam_cfg);
            epoch_used += used;
        }
        result.processed_samples += epoch_used + epoch_skipped;
        result.skipped_samples += epoch_skipped;
        if (result.processed_samples > 0 &&
            result.skipped_samples * 2 > result.processed_samples)
            throw std::runtime_error("train_kpm: more than 50% of samples skipped by retrieval starvation");

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = epoch_used ? epoch_loss / static_cast<double>(epoch_used) : 0.0;
        row.skipped = epoch_skipped;
        row.val_loss = val_pairs.empty() ? row.train_loss : eval_loss(val_pairs, nullptr);
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
    result.mask_violations += index.mask_violations();
    result.final_index = MemoryIndex::build_from_pairs(train_pairs, encoder, store, n_cells);
    corrupt(result.final_index);
    return result;
}

} // namespace memf
