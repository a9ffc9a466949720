#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memf/tensor.hpp"

namespace memf {

/// One raw time series: [L x D] values plus a free-text frequency label.
struct TimeSeries {
    std::string id;
    Tensor values;  // [L, D]
    std::string frequency;

    std::size_t length() const { return values.rank() == 2 ? values.rows() : values.numel(); }
    std::size_t channels() const { return values.rank() == 2 ? values.cols() : 1; }
};

/// Temporal split fractions and the per-series boundaries derived from them:
/// t_train = floor(alpha * L), t_val = floor((alpha + beta) * L).
struct SplitSpec {
    double alpha = 0.7;
    double beta = 0.1;

    SplitSpec() = default;
    SplitSpec(double a, double b);

    std::size_t t_train(std::size_t length) const;
    std::size_t t_val(std::size_t length) const;
};

struct LoadReport {
    std::size_t series_count = 0;
    std::size_t imputed_values = 0;
    std::size_t rows = 0;
};

enum class CsvFormat { Wide, Long };

/// Loads `timestamp,ch0,ch1,...` (wide) or `series_id,timestamp,value` (long)
/// CSV. Timestamps must be non-decreasing per series; interior gaps in values
/// are forward-filled (leading gaps back-filled from the first observation)
/// and counted in the report. A channel with no observed value at all is a
/// data error.
std::vector<TimeSeries> load_csv(const std::string& path, CsvFormat format, LoadReport* report = nullptr);

struct ChannelStats {
    double mu = 0.0;
    double sigma = 1.0;  // population std over the training interval, floored at 1e-8
};

struct NormalizedSeries {
    TimeSeries series;
    std::vector<ChannelStats> stats;  // one per channel
};

/// Z-scores each channel using mean/std computed on the training interval
/// [0, t_train) only.
NormalizedSeries normalize(const TimeSeries& s, const SplitSpec& split);

/// Splits a [L x D] series into D univariate streams. Downstream processing
/// is channel independent; each stream keeps (series_id, channel) identity.
struct UnivariateStream {
    std::string series_id;
    std::size_t channel = 0;
    std::vector<double> values;
};

std::vector<UnivariateStream> split_channels(const NormalizedSeries& ns);

/// Stats sidecar written next to pipeline outputs.
std::string stats_to_json(const std::vector<NormalizedSeries>& all, const SplitSpec& split);

} // namespace memf
