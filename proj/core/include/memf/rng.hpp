#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace memf {

/// Deterministic pseudo-random source. splitmix64 over (seed, position):
/// the same seed plus the same call sequence yields a bit-identical stream on
/// every platform — std::mt19937 would be portable but its distributions are
/// not, so sampling is done by hand here.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), pos_(0) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return pos_; }

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (two draws per sample, no caching).
    double normal();
    bool bernoulli(double p);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Child stream keyed by a label. Stages derive their own streams from
    /// the single top-level seed so each stage is independently reproducible.
    Rng derive(std::string_view label) const;

private:
    std::uint64_t seed_;
    std::uint64_t pos_;
};

/// FNV-1a, used for stream derivation and parameter checksums.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a_str(std::string_view s);

} // namespace memf
