#include "memf/windowing.hpp"

#include <stdexcept>

namespace memf {

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

std::vector<WindowPair> segment_series(const UnivariateStream& stream, std::size_t K,
                                       std::size_t V, std::size_t stride,
                                       const std::optional<SplitSpec>& split) {
    if (K < 1 || V < 1 || stride < 1)
        throw std::invalid_argument("segment_series: K, V and stride must be >= 1");
    const std::size_t L = stream.values.size();
    std::vector<WindowPair> out;
    if (L < K + V) return out;  // span exceeds length: zero pairs, not an error

    const std::size_t t_train = split ? split->t_train(L) : L;
    const std::size_t t_val = split ? split->t_val(L) : L;

    for (std::size_t t = 0; t + K + V - 1 < L; t += stride) {
        const std::size_t last = t + K + V - 1;
        Split tag;
        if (!split) {
            tag = Split::Train;
        } else if (last < t_train) {
            tag = Split::Train;
        } else if (t >= t_train && last < t_val) {
            tag = Split::Val;
        } else if (t >= t_val) {
            tag = Split::Test;
        } else {
            continue;  // straddles a boundary
        }
        WindowPair p;
        p.series_id = stream.series_id;
        p.channel = stream.channel;
        p.t = t;
        p.split = tag;
        p.key = Tensor({K});
        p.value = Tensor({V});
        for (std::size_t i = 0; i < K; ++i) p.key[i] = stream.values[t + i];
        for (std::size_t i = 0; i < V; ++i) p.value[i] = stream.values[t + K + i];
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<WindowPair> filter_split(const std::vector<WindowPair>& pairs, Split s) {
    std::vector<WindowPair> out;
    for (const auto& p : pairs)
        if (p.split == s) out.push_back(p);
    return out;
}

} // namespace memf
