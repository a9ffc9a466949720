#include "memf/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "memf/ablate.hpp"
#include "memf/kernels.hpp"
#include "memf/latency_bench.hpp"

#include "json.hpp"

namespace memf::pipeline {

namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StageError("io", "cannot open " + path + " for writing");
    os << content;
    if (!os) throw StageError("io", "write failed for " + path);
}

void require_absent_or_overwritable(const RunConfig& cfg, const std::string& path) {
    if (cfg.no_overwrite && fs::exists(path))
        throw StageError("exists", "artifact already exists: " + path + " (no-overwrite set)");
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path))
        throw StageError("missing-prerequisite", what + " not found: " + path);
}

CsvFormat format_of(const std::string& name) {
    if (name == "wide") return CsvFormat::Wide;
    if (name == "long") return CsvFormat::Long;
    throw StageError("config", "unknown csv format '" + name + "'");
}

CsvFormat sniff_format(const std::string& path) {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    return header.rfind("series_id", 0) == 0 ? CsvFormat::Long : CsvFormat::Wide;
}

nlohmann::json header_with_kpm(const RunConfig& cfg, const std::string& stage,
                               const KpmConfig& kcfg) {
    nlohmann::json h = nlohmann::json::parse(artifact_header_json(cfg, stage));
    h["kpm_config"] = nlohmann::json::parse(kcfg.to_json());
    return h;
}

} // namespace

PreparedData prepare_from_series(const std::vector<TimeSeries>& raw, const RunConfig& cfg) {
    PreparedData out;
    out.split = SplitSpec(cfg.alpha, cfg.beta);
    out.lookback = cfg.lookback;
    out.horizon = cfg.horizon;
    for (const auto& s : raw) {
        NormalizedSeries ns = normalize(s, out.split);
        for (const auto& stream : split_channels(ns)) {
            auto pairs = segment_series(stream, cfg.lookback, cfg.horizon, cfg.stride, out.split);
            for (auto& p : pairs) {
                switch (p.split) {
                    case Split::Train: out.train.push_back(std::move(p)); break;
                    case Split::Val: out.val.push_back(std::move(p)); break;
                    case Split::Test: out.test.push_back(std::move(p)); break;
                }
            }
        }
        out.normalized.push_back(std::move(ns));
    }
    return out;
}

PreparedData prepare_from_csv(const RunConfig& cfg) {
    if (cfg.csv.empty()) throw StageError("config", "data.csv is not set");
    require_file(cfg.csv, "input dataset");
    auto series = load_csv(cfg.csv, format_of(cfg.format));
    return prepare_from_series(series, cfg);
}

TrainedKpm run_kpm_training(const PreparedData& data, const RunConfig& cfg, bool identity_loss,
                            double noise_fraction, bool log_retrievals) {
    KpmConfig kcfg;
    kcfg.latent_dim = cfg.latent_dim;
    kcfg.hidden = cfg.hidden;
    kcfg.branches = cfg.branches;
    kcfg.horizon = cfg.horizon;
    kcfg.chunk = cfg.effective_chunk();
    kcfg.enc_depth = cfg.kpm_enc_depth;
    kcfg.enc_heads = cfg.kpm_enc_heads;
    kcfg.dec_depth = cfg.kpm_dec_depth;
    kcfg.dec_heads = cfg.kpm_dec_heads;

    TrainedKpm tk{kcfg, KeyEncoder(cfg.lookback, cfg.latent_dim), ParamStore{}, {}};
    KpmModel model(kcfg);
    Rng init = Rng(cfg.seed).derive("init");
    tk.encoder.declare(tk.store, init);
    model.declare(tk.store, init);

    KpmTrainHyper hyper;
    hyper.lr = cfg.kpm_lr;
    hyper.batch = cfg.kpm_batch;
    hyper.max_epochs = cfg.kpm_epochs;
    hyper.patience = cfg.kpm_patience;
    hyper.index_refresh = cfg.index_refresh;
    hyper.n_cells = cfg.n_cells;
    hyper.identity_loss = identity_loss;
    hyper.log_retrievals = log_retrievals;
    hyper.noise_fraction = noise_fraction;
    hyper.seed = cfg.seed;

    tk.result = train_kpm(data.train, data.val, tk.encoder, model, tk.store, hyper);
    return tk;
}

std::vector<Tensor> kpm_candidates(const TrainedKpm& kpm, const Tensor& key) {
    KpmModel model(kpm.config);
    return model.infer(kpm.store, kpm.encoder.encode(kpm.store, key));
}

std::unique_ptr<BaseForecaster> make_forecaster(const RunConfig& cfg) {
    if (cfg.forecaster == "seasonal_naive") {
        return std::make_unique<SeasonalNaive>(cfg.period, cfg.lookback, cfg.horizon);
    }
    if (cfg.forecaster == "linear_patch") {
        if (cfg.pretrain_csv.empty())
            throw StageError("config", "forecaster.pretrain_csv is required for linear_patch");
        require_file(cfg.pretrain_csv, "pretraining corpus");
        auto series = load_csv(cfg.pretrain_csv, sniff_format(cfg.pretrain_csv));
        SplitSpec split(cfg.alpha, cfg.beta);
        std::vector<WindowPair> corpus;
        for (const auto& s : series) {
            NormalizedSeries ns = normalize(s, split);
            for (const auto& stream : split_channels(ns)) {
                auto pairs = segment_series(stream, cfg.lookback, cfg.horizon, 1);
                corpus.insert(corpus.end(), pairs.begin(), pairs.end());
            }
        }
        return std::make_unique<LinearPatchForecaster>(fit_ridge(corpus, cfg.lambda));
    }
    throw StageError("config", "unknown forecaster kind '" + cfg.forecaster + "'");
}

std::vector<FusionSample> build_fusion_samples(const std::vector<WindowPair>& pairs,
                                               const TrainedKpm& kpm, const BaseForecaster& base,
                                               std::size_t truncate_k) {
    const std::size_t M = kpm.config.branches;
    const std::size_t keep = truncate_k == 0 ? M : truncate_k;
    if (keep > M)
        throw std::invalid_argument("build_fusion_samples: k " + std::to_string(keep) +
                                    " exceeds branch count " + std::to_string(M));
    KpmModel model(kpm.config);
    std::vector<FusionSample> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        FusionSample s;
        s.base = base.predict(p.key);
        auto cands = model.infer(kpm.store, kpm.encoder.encode(kpm.store, p.key));
        cands.resize(keep);
        s.candidates = std::move(cands);
        s.target = p.value;
        out.push_back(std::move(s));
    }
    return out;
}

TrainedFusion run_fusion_training(const std::vector<FusionSample>& train,
                                  const std::vector<FusionSample>& val, const RunConfig& cfg,
                                  const BaseForecaster& base, bool gated) {
    FusionConfig fcfg;
    fcfg.token_dim = cfg.token_dim;
    fcfg.branches = cfg.branches;
    fcfg.horizon = cfg.horizon;
    fcfg.p_mem = cfg.p_mem;
    fcfg.p_base = cfg.p_base;
    fcfg.tau = cfg.tau;
    fcfg.depth = cfg.fusion_depth;
    fcfg.heads = cfg.fusion_heads;
    fcfg.gated = gated;

    TrainedFusion tf{fcfg, ParamStore{}, {}, 0, 0};
    FusionModel model(fcfg);
    Rng init = Rng(cfg.seed).derive("fusion-init");
    model.declare(tf.store, init);

    FusionTrainHyper hyper;
    hyper.lr = cfg.fusion_lr;
    hyper.batch = cfg.fusion_batch;
    hyper.max_epochs = cfg.fusion_epochs;
    hyper.patience = cfg.fusion_patience;
    hyper.seed = cfg.seed;

    tf.base_checksum_before = base.checksum();
    tf.result = train_fusion(model, tf.store, train, val, hyper);
    tf.base_checksum_after = base.checksum();
    if (tf.base_checksum_before != tf.base_checksum_after)
        throw std::logic_error("train_fusion: frozen base forecaster changed during training");
    return tf;
}

EvalResult evaluate_fused(const std::vector<FusionSample>& samples, const FusionModel& model,
                          const ParamStore& store, std::size_t truncate_k) {
    std::vector<Tensor> fused, bases, targets;
    fused.reserve(samples.size());
    for (const auto& s : samples) {
        std::vector<Tensor> cands = s.candidates;
        if (truncate_k && truncate_k < cands.size()) cands.resize(truncate_k);
        fused.push_back(model.infer(store, s.base, cands).fused);
        bases.push_back(s.base);
        targets.push_back(s.target);
    }
    return {compute_metrics(fused, targets), compute_metrics(bases, targets)};
}

double branch_diversity(const TrainedKpm& kpm, const std::vector<WindowPair>& pairs) {
    if (pairs.empty()) return 0.0;
    KpmModel model(kpm.config);
    const std::size_t M = kpm.config.branches;
    double total = 0.0;
    for (const auto& p : pairs) {
        auto outs = model.infer(kpm.store, kpm.encoder.encode(kpm.store, p.key));
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = i + 1; j < M; ++j) {
                acc += kern::l2_dist(outs[i], outs[j]);
                ++n;
            }
        total += n ? acc / static_cast<double>(n) : 0.0;
    }
    return total / static_cast<double>(pairs.size());
}

// ---- CLI stages ---------------------------------------------------------------

void cmd_synth(const RunConfig& cfg) {
    Paths paths{cfg.out};
    fs::create_directories(cfg.out);
    require_absent_or_overwritable(cfg, paths.dataset_csv());
    SynthDataset ds = make_synth(cfg.synth_kind, cfg.n_series, cfg.length, cfg.seed);
    write_file(paths.dataset_csv(), dataset_to_csv(ds));
    nlohmann::json meta = nlohmann::json::parse(artifact_header_json(cfg, "synth"));
    meta["kind"] = ds.kind;
    meta["n_series"] = ds.series.size();
    write_file(cfg.out + "/dataset_meta.json", meta.dump(2));
    std::cout << "synth: wrote " << paths.dataset_csv() << " (" << ds.series.size()
              << " series)\n";
}

void cmd_build_kb(const RunConfig& cfg) {
    Paths paths{cfg.out};
    fs::create_directories(cfg.out);
    require_absent_or_overwritable(cfg, paths.kb_index());
    PreparedData data = prepare_from_csv(cfg);
    if (data.train.empty()) throw StageError("no-data", "no training pairs after windowing");

    KeyEncoder encoder(cfg.lookback, cfg.latent_dim);
    ParamStore store;
    Rng init = Rng(cfg.seed).derive("init");
    encoder.declare(store, init);

    MemoryIndex index =
        MemoryIndex::build_from_pairs(data.train, encoder, store, cfg.n_cells
                                          ? cfg.n_cells
                                          : std::max<std::size_t>(1, static_cast<std::size_t>(
                                                std::sqrt(static_cast<double>(data.train.size())))));
    index.save(paths.kb_index());

    Checkpoint enc_ck;
    enc_ck.kind = CheckpointKind::KeyEncoder;
    enc_ck.config_json = artifact_header_json(cfg, "build-kb");
    enc_ck.put_store(store);
    enc_ck.save(paths.encoder_ckpt());

    write_file(paths.norm_stats(), stats_to_json(data.normalized, data.split));
    nlohmann::json meta = nlohmann::json::parse(artifact_header_json(cfg, "build-kb"));
    meta["entries"] = index.size();
    meta["n_cells"] = index.n_cells();
    write_file(paths.kb_meta(), meta.dump(2));
    std::cout << "build-kb: " << index.size() << " entries in " << index.n_cells() << " cells -> "
              << paths.kb_index() << "\n";
}

void cmd_train_kpm(const RunConfig& cfg) {
    Paths paths{cfg.out};
    fs::create_directories(cfg.out);
    require_file(paths.kb_index(), "knowledge base (run build-kb first)");
    require_absent_or_overwritable(cfg, paths.kpm_ckpt());
    {
        MemoryIndex kb = MemoryIndex::load(paths.kb_index());
        if (kb.latent_dim() != cfg.latent_dim || kb.horizon() != cfg.horizon ||
            kb.lookback() != cfg.lookback)
            throw StageError("incompatible",
                             "kb.index was built with d=" + std::to_string(kb.latent_dim()) +
                                 ", V=" + std::to_string(kb.horizon()) +
                                 ", K=" + std::to_string(kb.lookback()) +
                                 "; current config disagrees");
    }
    PreparedData data = prepare_from_csv(cfg);
    TrainedKpm tk = run_kpm_training(data, cfg, cfg.kpm_loss == "mse", 0.0, true);

    Checkpoint ck;
    ck.kind = CheckpointKind::Kpm;
    ck.config_json = header_with_kpm(cfg, "train-kpm", tk.config).dump();
    ck.put_store(tk.store);
    ck.save(paths.kpm_ckpt());
    tk.result.final_index.save(paths.kb_index());
    write_file(paths.kpm_history(), history_to_csv(tk.result.history));

    std::ostringstream log;
    log << "q_series,q_channel,q_t,span,c_series,c_channel,c_t\n";
    for (const auto& r : tk.result.retrieval_log)
        log << r.q_series << ',' << r.q_channel << ',' << r.q_t << ',' << r.span << ','
            << r.c_series << ',' << r.c_channel << ',' << r.c_t << '\n';
    write_file(paths.retrieval_log(), log.str());
    std::cout << "train-kpm: " << tk.result.history.size() << " epochs, final val loss "
              << (tk.result.history.empty() ? 0.0 : tk.result.history.back().val_loss) << "\n";
}

namespace {

TrainedKpm load_kpm(const RunConfig& cfg, const std::string& path) {
    require_file(path, "KPM checkpoint (run train-kpm first)");
    Checkpoint ck = Checkpoint::load(path);
    if (ck.kind != CheckpointKind::Kpm)
        throw StageError("incompatible", path + " is not a KPM checkpoint");
    const auto header = nlohmann::json::parse(ck.config_json);
    KpmConfig kcfg = KpmConfig::from_json(header.at("kpm_config").dump());
    if (kcfg.horizon != cfg.horizon)
        throw StageError("incompatible", "KPM checkpoint has V=" + std::to_string(kcfg.horizon) +
                                             " but config asks V=" + std::to_string(cfg.horizon));
    if (kcfg.latent_dim != cfg.latent_dim)
        throw StageError("incompatible", "KPM checkpoint has d=" + std::to_string(kcfg.latent_dim) +
                                             " but config asks d=" + std::to_string(cfg.latent_dim));
    const std::size_t ck_lookback =
        header.at("config").at("data").at("k").get<std::size_t>();
    if (ck_lookback != cfg.lookback)
        throw StageError("incompatible", "KPM checkpoint has K=" + std::to_string(ck_lookback) +
                                             " but config asks K=" + std::to_string(cfg.lookback));
    TrainedKpm tk{kcfg, KeyEncoder(cfg.lookback, kcfg.latent_dim), ck.to_store(), {}};
    return tk;
}

std::unique_ptr<BaseForecaster> load_or_fit_forecaster(const RunConfig& cfg, const Paths& paths) {
    if (fs::exists(paths.forecaster_ckpt()))
        return forecaster_from_checkpoint(Checkpoint::load(paths.forecaster_ckpt()));
    auto f = make_forecaster(cfg);
    Checkpoint ck = f->to_checkpoint(artifact_header_json(cfg, "fit-forecaster"));
    ck.save(paths.forecaster_ckpt());
    return f;
}

} // namespace

void cmd_train_fusion(const RunConfig& cfg) {
    Paths paths{cfg.out};
    fs::create_directories(cfg.out);
    TrainedKpm kpm = load_kpm(cfg, paths.kpm_ckpt());
    require_absent_or_overwritable(cfg, paths.fusion_ckpt());
    auto base = load_or_fit_forecaster(cfg, paths);
    if (base->lookback() != cfg.lookback || base->horizon() != cfg.horizon)
        throw StageError("incompatible", "forecaster checkpoint has K=" +
                                             std::to_string(base->lookback()) + ", V=" +
                                             std::to_string(base->horizon()) +
                                             "; current config disagrees");
    PreparedData data = prepare_from_csv(cfg);
    const std::size_t truncate_k = cfg.k;
    if (truncate_k > kpm.config.branches)
        throw StageError("config", "k=" + std::to_string(truncate_k) + " exceeds KPM branches M=" +
                                       std::to_string(kpm.config.branches));
    auto train = build_fusion_samples(data.train, kpm, *base, truncate_k);
    auto val = build_fusion_samples(data.val, kpm, *base, truncate_k);
    if (train.empty()) throw StageError("no-data", "no fusion training samples");
    TrainedFusion tf = run_fusion_training(train, val, cfg, *base, cfg.gated);

    Checkpoint ck;
    ck.kind = CheckpointKind::Fusion;
    nlohmann::json header = nlohmann::json::parse(artifact_header_json(cfg, "train-fusion"));
    header["fusion_config"] = nlohmann::json::parse(tf.config.to_json());
    header["base_checksum"] = tf.base_checksum_before;
    ck.config_json = header.dump();
    ck.put_store(tf.store);
    ck.save(paths.fusion_ckpt());
    write_file(paths.fusion_history(), history_to_csv(tf.result.history));
    std::cout << "train-fusion: " << tf.result.history.size() << " epochs, final val mse "
              << (tf.result.history.empty() ? 0.0 : tf.result.history.back().val_loss) << "\n";
}

void cmd_forecast(const RunConfig& cfg) {
    Paths paths{cfg.out};
    fs::create_directories(cfg.out);
    TrainedKpm kpm = load_kpm(cfg, paths.kpm_ckpt());
    require_file(paths.forecaster_ckpt(), "forecaster checkpoint (run train-fusion first)");
    require_file(paths.fusion_ckpt(), "fusion checkpoint (run train-fusion first)");
    require_absent_or_overwritable(cfg, paths.metrics());
    auto base = forecaster_from_checkpoint(Checkpoint::load(paths.forecaster_ckpt()));

    Checkpoint fck = Checkpoint::load(paths.fusion_ckpt());
    if (fck.kind != CheckpointKind::Fusion)
        throw StageError("incompatible", paths.fusion_ckpt() + " is not a fusion checkpoint");
    const auto fheader = nlohmann::json::parse(fck.config_json);
    FusionConfig fcfg = FusionConfig::from_json(fheader.at("fusion_config").dump());
    if (fcfg.horizon != cfg.horizon)
        throw StageError("incompatible",
                         "fusion checkpoint has V=" + std::to_string(fcfg.horizon) +
                             " but config asks V=" + std::to_string(cfg.horizon));
    FusionModel fusion(fcfg);
    ParamStore fstore = fck.to_store();

    PreparedData data = prepare_from_csv(cfg);
    if (data.test.empty()) throw StageError("no-data", "no test pairs after windowing");
    const std::size_t truncate_k = cfg.k;
    auto samples = build_fusion_samples(data.test, kpm, *base, truncate_k);

    std::ostringstream pred;
    pred.precision(17);
    pred << "series_id,channel,t,step,base,fused,target\n";
    std::vector<Tensor> fused_all, base_all, target_all;
    nlohmann::json weights_j = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        ForecastBundle b = fusion.infer(fstore, s.base, s.candidates);
        const auto& p = data.test[i];
        for (std::size_t j = 0; j < cfg.horizon; ++j)
            pred << p.series_id << ',' << p.channel << ',' << p.t << ',' << j << ',' << s.base[j]
                 << ',' << b.fused[j] << ',' << s.target[j] << '\n';
        if (cfg.plot_data) {
            nlohmann::json w;
            w["series_id"] = p.series_id;
            w["channel"] = p.channel;
            w["t"] = p.t;
            w["weights"] = b.weights;
            weights_j.push_back(std::move(w));
        }
        fused_all.push_back(b.fused);
        base_all.push_back(s.base);
        target_all.push_back(s.target);
    }
    write_file(paths.predictions(), pred.str());

    nlohmann::json mj;
    mj["header"] = nlohmann::json::parse(artifact_header_json(cfg, "forecast"));
    mj["fused"] = nlohmann::json::parse(metrics_to_json(compute_metrics(fused_all, target_all)));
    mj["base"] = nlohmann::json::parse(metrics_to_json(compute_metrics(base_all, target_all)));
    write_file(paths.metrics(), mj.dump(2));

    if (cfg.plot_data) {
        nlohmann::json diag;
        diag["gate"] = std::vector<double>(fstore.at("fus.gate").raw());
        diag["per_query_weights"] = weights_j;
        write_file(paths.weights_diag(), diag.dump(2));
    }
    std::cout << "forecast: " << samples.size() << " test windows -> " << paths.metrics() << "\n";
}

void cmd_bench(const RunConfig& cfg) {
    Paths paths{cfg.out};
    fs::create_directories(cfg.out);
    require_absent_or_overwritable(cfg, paths.bench_json());
    LatencyBenchConfig bc;
    bc.kb_sizes = cfg.kb_sizes;
    bc.l_in = cfg.l_in;
    bc.l_out = cfg.l_out;
    bc.batch = cfg.bench_batch;
    bc.warmup = cfg.warmup;
    bc.reps = cfg.reps;
    bc.k = cfg.k ? cfg.k : 3;
    bc.latent_dim = cfg.latent_dim;
    bc.seed = cfg.seed;
    LatencyReport report = bench_latency(bc);

    nlohmann::json j = nlohmann::json::parse(report.to_json());
    j["header"] = nlohmann::json::parse(artifact_header_json(cfg, "bench"));
    write_file(paths.bench_json(), j.dump(2));
    write_file(paths.bench_raw(), report.raw_csv());
    if (cfg.plot_data) write_file(paths.bench_plot(), report.plot_csv());
    for (const auto& s : report.sizes)
        std::cout << "bench: kb=" << s.kb_size << " kpm " << s.kpm_mean_ms << " ms, rag "
                  << s.rag_mean_ms << " ms, speedup " << s.speedup << "x\n";
}

void cmd_ablate(const RunConfig& cfg) {
    Paths paths{cfg.out};
    fs::create_directories(cfg.out);
    require_absent_or_overwritable(cfg, paths.ablate_json(cfg.ablate_what));
    PreparedData data = prepare_from_csv(cfg);
    if (cfg.ablate_what == "topk") {
        auto base = make_forecaster(cfg);
        TrainedKpm kpm = run_kpm_training(data, cfg, cfg.kpm_loss == "mse", 0.0);
        TopkReport rep = ablate_topk(data, kpm, *base, cfg);
        write_file(paths.ablate_json("topk"), rep.to_json(cfg));
        write_file(paths.ablate_csv("topk"), rep.to_csv());
        std::cout << "ablate topk: " << rep.rows.size() << " rows -> "
                  << paths.ablate_json("topk") << "\n";
    } else if (cfg.ablate_what == "loss") {
        LossAblationReport rep = ablate_loss(data, cfg);
        write_file(paths.ablate_json("loss"), rep.to_json(cfg));
        std::cout << "ablate loss: perm fused mse " << rep.perm_fused_mse << ", mse fused mse "
                  << rep.mse_fused_mse << "\n";
    } else if (cfg.ablate_what == "gating") {
        GatingReport rep = ablate_gating(data, cfg);
        write_file(paths.ablate_json("gating"), rep.to_json(cfg));
        std::cout << "ablate gating: gated mse " << rep.gated_mse << ", ungated mse "
                  << rep.ungated_mse << "\n";
    } else {
        throw StageError("config", "unknown ablation '" + cfg.ablate_what +
                                       "' (expected topk, loss or gating)");
    }
}

} // namespace memf::pipeline
