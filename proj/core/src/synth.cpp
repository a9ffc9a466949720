#include "memf/synth.hpp"

#include <cmath>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "memf/kernels.hpp"
#include "memf/rng.hpp"

namespace memf {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string series_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%03zu", i);
    return buf;
}

/// Canonical fingerprint of a key pattern after per-window standardization;
/// used to guarantee distinct content groups stay distinct for retrieval.
std::string standardized_fingerprint(const std::vector<double>& key) {
    Tensor t = Tensor::vec(key);
    Tensor s = kern::standardize(t);
    std::ostringstream os;
    os.precision(3);
    os << std::fixed;
    for (std::size_t i = 0; i < s.numel(); ++i) os << s[i] << '|';
    return os.str();
}

} // namespace

SynthDataset synth_bimodal(std::size_t n_series, std::size_t length, std::uint64_t seed) {
    SynthDataset ds;
    ds.kind = "bimodal";
    if (n_series == 0) {
        std::cerr << "synth: n_series=0, emitting empty dataset\n";
        return ds;
    }
    if (length < kBimodalSlot)
        throw std::invalid_argument("synth_bimodal: length must be at least " +
                                    std::to_string(kBimodalSlot));
    Rng rng = Rng(seed).derive("synth-bimodal");
    const SplitSpec split;  // layout assumes the default 70/10/20 split
    std::set<std::string> used_fingerprints;

    for (std::size_t s = 0; s < n_series; ++s) {
        const std::size_t S = length / kBimodalSlot;
        const std::size_t t_train = split.t_train(length);
        const std::size_t t_val = split.t_val(length);

        std::vector<std::size_t> train_slots, val_slots, test_slots;
        for (std::size_t i = 0; i < S; ++i) {
            const std::size_t lo = i * kBimodalSlot, hi = lo + kBimodalSlot - 1;
            if (hi < t_train) train_slots.push_back(i);
            else if (lo >= t_train && hi < t_val) val_slots.push_back(i);
            else if (lo >= t_val) test_slots.push_back(i);
            // straddling slots stay filler; their windows are split-dropped
        }
        const std::size_t n_groups = std::max<std::size_t>(1, train_slots.size() / 3);

        // Content patterns per group. The key head (first 4 points) carries
        // the content signature; the tail comes from a tiny shared set, so a
        // period-4 seasonal-naive backbone sees the tail but cannot identify
        // the content. Only the memory path, which reads the whole key, can
        // resolve the content offset in the continuation.
        static constexpr double kTails[3][4] = {
            {0, 2, -1, 1}, {-2, 0, 2, 0}, {1, -1, 0, 2}};
        std::vector<std::vector<double>> key_base(n_groups), val_base(n_groups);
        for (std::size_t g = 0; g < n_groups; ++g) {
            for (int attempt = 0;; ++attempt) {
                std::vector<double> kb(kBimodalKey);
                const double* tail = kTails[rng.below(3)];
                for (std::size_t i = 0; i < 4; ++i)
                    kb[i] = static_cast<double>(static_cast<long>(rng.below(9)) - 4);
                for (std::size_t i = 0; i < 4; ++i) kb[4 + i] = tail[i];
                double mu = 0.0, var = 0.0;
                for (double x : kb) mu += x;
                mu /= kBimodalKey;
                for (double x : kb) var += (x - mu) * (x - mu);
                if (var / kBimodalKey < 1.0) continue;  // reject flat patterns
                const std::string fp = standardized_fingerprint(kb);
                if (used_fingerprints.count(fp)) {
                    if (attempt > 1000)
                        throw std::runtime_error("synth_bimodal: cannot find distinct key pattern");
                    continue;
                }
                used_fingerprints.insert(fp);
                key_base[g] = std::move(kb);
                break;
            }
            // value base = key tail + a non-negative scalar content offset;
            // the under-prediction of the naive backbone gives the
            // zero-initialized fusion gate a consistent direction to grow into
            const double offset = static_cast<double>(rng.below(9));
            val_base[g].resize(kBimodalValue);
            for (std::size_t i = 0; i < kBimodalValue; ++i)
                val_base[g][i] = key_base[g][kBimodalKey - kBimodalValue + i] + offset;
        }

        // coin plan: three train occurrences per group carry a 2-1 split in
        // a shuffled order; everything else draws a fresh coin
        std::vector<std::vector<int>> train_coins(n_groups);
        for (std::size_t g = 0; g < n_groups; ++g) {
            const int maj = rng.bernoulli(0.5) ? 1 : -1;
            std::vector<int> coins{maj, maj, -maj};
            for (std::size_t i = coins.size(); i > 1; --i)
                std::swap(coins[i - 1], coins[rng.below(i)]);
            train_coins[g] = coins;
        }

        std::vector<double> values(length);
        for (auto& v : values) v = rng.uniform(-kBimodalDither, kBimodalDither);  // filler + dither base

        auto emit_slot = [&](std::size_t slot, std::size_t group, int coin, Split intended) {
            const std::size_t base = slot * kBimodalSlot;
            for (std::size_t i = 0; i < kBimodalKey; ++i)
                values[base + i] += key_base[group][i];
            for (std::size_t i = 0; i < kBimodalValue; ++i)
                values[base + kBimodalKey + i] += val_base[group][i];
            values[base + kBimodalKey] += coin * kBimodalSpike;
            ds.slots.push_back({s, slot, group, coin, intended});
        };

        for (std::size_t j = 0; j < train_slots.size(); ++j) {
            const std::size_t g = j < 3 * n_groups ? j / 3 : j % n_groups;
            const int coin =
                j < 3 * n_groups ? train_coins[g][j % 3] : (rng.bernoulli(0.5) ? 1 : -1);
            emit_slot(train_slots[j], g, coin, Split::Train);
        }
        for (std::size_t j = 0; j < val_slots.size(); ++j)
            emit_slot(val_slots[j], j % n_groups, rng.bernoulli(0.5) ? 1 : -1, Split::Val);
        for (std::size_t j = 0; j < test_slots.size(); ++j)
            emit_slot(test_slots[j], j % n_groups, rng.bernoulli(0.5) ? 1 : -1, Split::Test);

        TimeSeries ts;
        ts.id = series_name(s);
        ts.values = Tensor({length, 1}, std::move(values));
        ts.frequency = "synthetic";
        ds.series.push_back(std::move(ts));
    }
    return ds;
}

SynthDataset synth_regime_shift(std::size_t n_series, std::size_t length, std::uint64_t seed) {
    SynthDataset ds;
    ds.kind = "regime_shift";
    if (n_series == 0) {
        std::cerr << "synth: n_series=0, emitting empty dataset\n";
        return ds;
    }
    Rng rng = Rng(seed).derive("synth-regime-shift");
    // Every component is 16-periodic: the domain has one rigid cycle that a
    // matching-period naive backbone reproduces exactly, while a backbone
    // pretrained on free-period sinusoids does not.
    const std::size_t spike_period = 16;
    for (std::size_t s = 0; s < n_series; ++s) {
        const double a1 = rng.uniform(0.8, 1.2);
        const double p1 = 16.0;
        const double f1 = rng.uniform(0.0, 2.0 * kPi);
        const double a2 = rng.uniform(0.3, 0.6);
        const double p2 = rng.bernoulli(0.5) ? 4.0 : 8.0;
        const double f2 = rng.uniform(0.0, 2.0 * kPi);
        const std::size_t rho = rng.below(spike_period);
        std::vector<double> values(length);
        for (std::size_t t = 0; t < length; ++t) {
            double x = a1 * std::sin(2.0 * kPi * static_cast<double>(t) / p1 + f1) +
                       a2 * std::sin(2.0 * kPi * static_cast<double>(t) / p2 + f2);
            if (t % spike_period == rho) x += 3.0;
            if (t % spike_period == (rho + 1) % spike_period) x -= 1.5;
            x += rng.uniform(-0.05, 0.05);
            values[t] = x;
        }
        TimeSeries ts;
        ts.id = series_name(s);
        ts.values = Tensor({length, 1}, std::move(values));
        ts.frequency = "synthetic";
        ds.series.push_back(std::move(ts));
    }
    return ds;
}

SynthDataset synth_sinus_mix(std::size_t n_series, std::size_t length, std::uint64_t seed) {
    SynthDataset ds;
    ds.kind = "sinus_mix";
    if (n_series == 0) {
        std::cerr << "synth: n_series=0, emitting empty dataset\n";
        return ds;
    }
    Rng rng = Rng(seed).derive("synth-sinus-mix");
    for (std::size_t s = 0; s < n_series; ++s) {
        double amp[3], per[3], pha[3];
        for (int i = 0; i < 3; ++i) {
            amp[i] = rng.uniform(0.5, 1.5);
            per[i] = rng.uniform(6.0, 48.0);
            pha[i] = rng.uniform(0.0, 2.0 * kPi);
        }
        const double slope = rng.uniform(-0.01, 0.01);
        std::vector<double> values(length);
        for (std::size_t t = 0; t < length; ++t) {
            double x = slope * static_cast<double>(t);
            for (int i = 0; i < 3; ++i)
                x += amp[i] * std::sin(2.0 * kPi * static_cast<double>(t) / per[i] + pha[i]);
            x += rng.uniform(-0.05, 0.05);
            values[t] = x;
        }
        TimeSeries ts;
        ts.id = series_name(s);
        ts.values = Tensor({length, 1}, std::move(values));
        ts.frequency = "synthetic";
        ds.series.push_back(std::move(ts));
    }
    return ds;
}

SynthDataset make_synth(const std::string& kind, std::size_t n_series, std::size_t length,
                        std::uint64_t seed) {
    if (kind == "bimodal") return synth_bimodal(n_series, length, seed);
    if (kind == "regime_shift") return synth_regime_shift(n_series, length, seed);
    if (kind == "sinus_mix") return synth_sinus_mix(n_series, length, seed);
    throw std::invalid_argument("synth: unknown kind '" + kind +
                                "' (expected bimodal, regime_shift or sinus_mix)");
}

std::string dataset_to_csv(const SynthDataset& ds) {
    std::ostringstream os;
    os.precision(17);
    os << "series_id,timestamp,value\n";
    for (const auto& ts : ds.series) {
        for (std::size_t t = 0; t < ts.length(); ++t)
            os << ts.id << ',' << t << ',' << ts.values.at(t, 0) << '\n';
    }
    return os.str();
}

} // namespace memf
