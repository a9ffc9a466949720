#pragma once

#include <memory>
#include <string>
#include <vector>

#include "memf/checkpoint.hpp"
#include "memf/tensor.hpp"
#include "memf/windowing.hpp"

namespace memf {

/// Frozen base forecaster contract. predict is pure; parameters never change
/// after the freeze, which the checksum makes checkable.
class BaseForecaster {
public:
    virtual ~BaseForecaster() = default;
    virtual Tensor predict(const Tensor& lookback) const = 0;
    virtual std::uint64_t checksum() const = 0;
    virtual std::size_t lookback() const = 0;
    virtual std::size_t horizon() const = 0;
    virtual std::string kind() const = 0;
    virtual Checkpoint to_checkpoint(const std::string& config_json) const = 0;
};

/// Horizon step j repeats the look-back value at position K - s + (j mod s).
class SeasonalNaive final : public BaseForecaster {
public:
    SeasonalNaive(std::size_t period, std::size_t lookback, std::size_t horizon);

    Tensor predict(const Tensor& lookback) const override;
    std::uint64_t checksum() const override;
    std::size_t lookback() const override { return lookback_; }
    std::size_t horizon() const override { return horizon_; }
    std::string kind() const override { return "seasonal_naive"; }
    Checkpoint to_checkpoint(const std::string& config_json) const override;
    std::size_t period() const { return period_; }

    static SeasonalNaive from_checkpoint(const Checkpoint& ck);

private:
    std::size_t period_;
    std::size_t lookback_;
    std::size_t horizon_;
};

/// Closed-form ridge map from look-back to horizon: prediction = W x + bias.
/// Fitted once on a designated pretraining corpus, then frozen.
class LinearPatchForecaster final : public BaseForecaster {
public:
    LinearPatchForecaster(Tensor W, Tensor bias, double lambda);

    Tensor predict(const Tensor& lookback) const override;
    std::uint64_t checksum() const override;
    std::size_t lookback() const override { return W_.cols(); }
    std::size_t horizon() const override { return W_.rows(); }
    std::string kind() const override { return "linear_patch"; }
    Checkpoint to_checkpoint(const std::string& config_json) const override;
    const Tensor& weights() const { return W_; }
    const Tensor& bias() const { return bias_; }

    static LinearPatchForecaster from_checkpoint(const Checkpoint& ck);

private:
    Tensor W_;     // [V x K]
    Tensor bias_;  // [V]
    double lambda_;
};

/// W = Yc Xc^T (Xc Xc^T + lambda I)^-1 over mean-centered stacked corpus
/// windows; bias = y_mean - W x_mean. A singular normal matrix with lambda=0
/// is an error advising lambda > 0.
LinearPatchForecaster fit_ridge(const std::vector<WindowPair>& corpus, double lambda);

std::unique_ptr<BaseForecaster> forecaster_from_checkpoint(const Checkpoint& ck);

} // namespace memf
