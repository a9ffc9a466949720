#pragma once

#include <optional>
#include <string>
#include <vector>

#include "memf/series.hpp"
#include "memf/tensor.hpp"

namespace memf {

enum class Split { Train, Val, Test };

const char* split_name(Split s);

/// One (look-back key, forecast value) pair cut from a univariate stream.
/// key = x[t .. t+K-1], value = x[t+K .. t+K+V-1], both inside the split's
/// temporal interval.
struct WindowPair {
    std::string series_id;
    std::size_t channel = 0;
    std::size_t t = 0;
    Tensor key;    // [K]
    Tensor value;  // [V]
    Split split = Split::Train;
};

/// Cuts pairs at t = 0, stride, 2*stride, ... with t+K+V-1 < L. When a split
/// spec is given, a pair is kept only if its whole span [t, t+K+V-1] lies
/// inside one split interval; pairs straddling a boundary are dropped.
/// Without a spec every pair is kept and tagged Train.
std::vector<WindowPair> segment_series(const UnivariateStream& stream, std::size_t K,
                                       std::size_t V, std::size_t stride,
                                       const std::optional<SplitSpec>& split = std::nullopt);

std::vector<WindowPair> filter_split(const std::vector<WindowPair>& pairs, Split s);

} // namespace memf
