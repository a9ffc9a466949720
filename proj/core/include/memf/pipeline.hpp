#pragma once

#include <memory>
#include <string>
#include <vector>

#include "memf/forecasters.hpp"
#include "memf/fusion.hpp"
#include "memf/kpm.hpp"
#include "memf/metrics.hpp"
#include "memf/run_config.hpp"
#include "memf/series.hpp"
#include "memf/synth.hpp"

namespace memf::pipeline {

/// Thrown when a stage prerequisite (an artifact on disk) is absent or
/// incompatible; the CLI turns it into a nonzero exit with an error record.
class StageError : public std::runtime_error {
public:
    StageError(std::string code, const std::string& msg)
        : std::runtime_error(msg), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

struct Paths {
    std::string out;
    std::string dataset_csv() const { return out + "/dataset.csv"; }
    std::string norm_stats() const { return out + "/norm_stats.json"; }
    std::string kb_index() const { return out + "/kb.index"; }
    std::string kb_meta() const { return out + "/kb_meta.json"; }
    std::string encoder_ckpt() const { return out + "/encoder.ckpt"; }
    std::string kpm_ckpt() const { return out + "/kpm.ckpt"; }
    std::string kpm_history() const { return out + "/kpm_history.csv"; }
    std::string retrieval_log() const { return out + "/retrieval_log.csv"; }
    std::string forecaster_ckpt() const { return out + "/forecaster.ckpt"; }
    std::string fusion_ckpt() const { return out + "/fusion.ckpt"; }
    std::string fusion_history() const { return out + "/fusion_history.csv"; }
    std::string predictions() const { return out + "/predictions.csv"; }
    std::string metrics() const { return out + "/metrics.json"; }
    std::string weights_diag() const { return out + "/fusion_weights.json"; }
    std::string bench_json() const { return out + "/bench.json"; }
    std::string bench_raw() const { return out + "/bench_raw.csv"; }
    std::string bench_plot() const { return out + "/bench_plot.csv"; }
    std::string ablate_json(const std::string& what) const { return out + "/ablate_" + what + ".json"; }
    std::string ablate_csv(const std::string& what) const { return out + "/ablate_" + what + ".csv"; }
};

// ---- in-memory stage engine (shared by the CLI and the test suites) ---------

struct PreparedData {
    std::vector<NormalizedSeries> normalized;
    std::vector<WindowPair> train, val, test;
    SplitSpec split;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
};

PreparedData prepare_from_series(const std::vector<TimeSeries>& raw, const RunConfig& cfg);
PreparedData prepare_from_csv(const RunConfig& cfg);

struct TrainedKpm {
    KpmConfig config;
    KeyEncoder encoder;
    ParamStore store;  // key encoder + KPM parameters
    KpmTrainResult result;
};

/// Initializes encoder+KPM from the run seed and trains them jointly.
TrainedKpm run_kpm_training(const PreparedData& data, const RunConfig& cfg, bool identity_loss,
                            double noise_fraction, bool log_retrievals = false);

std::vector<Tensor> kpm_candidates(const TrainedKpm& kpm, const Tensor& key);

std::unique_ptr<BaseForecaster> make_forecaster(const RunConfig& cfg);

/// Builds (base prediction, candidates, target) triples for one split.
/// truncate_k = 0 keeps all M candidates; otherwise the first truncate_k.
std::vector<FusionSample> build_fusion_samples(const std::vector<WindowPair>& pairs,
                                               const TrainedKpm& kpm, const BaseForecaster& base,
                                               std::size_t truncate_k = 0);

struct TrainedFusion {
    FusionConfig config;
    ParamStore store;
    FusionTrainResult result;
    std::uint64_t base_checksum_before = 0;
    std::uint64_t base_checksum_after = 0;
};

TrainedFusion run_fusion_training(const std::vector<FusionSample>& train,
                                  const std::vector<FusionSample>& val, const RunConfig& cfg,
                                  const BaseForecaster& base, bool gated);

struct EvalResult {
    MetricReport fused;
    MetricReport base;
};

EvalResult evaluate_fused(const std::vector<FusionSample>& samples, const FusionModel& model,
                          const ParamStore& store, std::size_t truncate_k = 0);

/// Mean pairwise L2 distance between KPM branch outputs over a pair set.
double branch_diversity(const TrainedKpm& kpm, const std::vector<WindowPair>& pairs);

// ---- CLI stage entry points ---------------------------------------------------

void cmd_synth(const RunConfig& cfg);
void cmd_build_kb(const RunConfig& cfg);
void cmd_train_kpm(const RunConfig& cfg);
void cmd_train_fusion(const RunConfig& cfg);
void cmd_forecast(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);
void cmd_ablate(const RunConfig& cfg);

} // namespace memf::pipeline
