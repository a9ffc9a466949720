#pragma once

#include <unordered_map>

#include "memf/tape.hpp"

namespace memf {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second-moment state per parameter plus a shared step counter.
class AdamState {
public:
    std::uint64_t step() const { return step_; }

    /// One Adam update over every parameter that has a gradient. Parameters
    /// are visited in store order; parameters without a gradient entry are
    /// skipped entirely.
    void update(ParamStore& params, const GradStore& grads, const AdamConfig& cfg);

private:
    struct Moments {
        Tensor m;
        Tensor v;
    };
    std::unordered_map<std::string, Moments> moments_;
    std::uint64_t step_ = 0;
};

} // namespace memf
