#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memf/series.hpp"
#include "memf/windowing.hpp"

namespace memf {

/// Ground-truth annotation for one layout slot of the bimodal generator.
struct SlotInfo {
    std::size_t series = 0;
    std::size_t slot = 0;   // slot index within the series; slot span is kBimodalSlot
    std::size_t group = 0;  // content group id, unique per (series, group)
    int coin = 0;           // +1 / -1: which continuation mode follows the key
    Split intended = Split::Train;
};

struct SynthDataset {
    std::string kind;
    std::vector<TimeSeries> series;
    std::vector<SlotInfo> slots;  // bimodal only
};

// Bimodal layout constants. Each slot is an 8-point key region followed by a
// 4-point value region; the two continuation modes differ by +-kBimodalSpike
// at the first value position, so their L2 separation is 2*kBimodalSpike.
inline constexpr std::size_t kBimodalKey = 8;
inline constexpr std::size_t kBimodalValue = 4;
inline constexpr std::size_t kBimodalSlot = kBimodalKey + kBimodalValue;
inline constexpr double kBimodalSpike = 6.0;
inline constexpr double kBimodalDither = 0.02;

/// Every content group appears three times in the train region with a 2-1
/// coin split (so leakage-masked top-2 retrieval sees a mixed target set for
/// two of three queries), plus one validation and one test occurrence. The
/// layout assumes the default 70/10/20 split.
SynthDataset synth_bimodal(std::size_t n_series, std::size_t length, std::uint64_t seed);

/// Target-domain series: mixed sinusoids plus a recurring spike pattern at a
/// per-series phase. The spikes are the domain-specific structure a
/// sinusoid-pretrained base forecaster cannot know.
SynthDataset synth_regime_shift(std::size_t n_series, std::size_t length, std::uint64_t seed);

/// Stand-in pretraining corpus: sums of sinusoids with a mild linear trend.
SynthDataset synth_sinus_mix(std::size_t n_series, std::size_t length, std::uint64_t seed);

SynthDataset make_synth(const std::string& kind, std::size_t n_series, std::size_t length,
                        std::uint64_t seed);

/// Long-format CSV (series_id,timestamp,value), deterministic byte-for-byte
/// for a given dataset.
std::string dataset_to_csv(const SynthDataset& ds);

} // namespace memf
