#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memf/key_encoder.hpp"
#include "memf/rng.hpp"
#include "memf/tensor.hpp"
#include "memf/windowing.hpp"

namespace memf {

/// Temporal-overlap exclusion for retrieval: a candidate is barred iff it
/// comes from the same (series, channel) and |t_n - t_q| < span, where span
/// is the full window length K+V.
struct LeakageMask {
    std::string series_id;
    std::size_t channel = 0;
    std::size_t t = 0;
    std::size_t span = 0;  // K + V

    bool excludes(const std::string& sid, std::size_t ch, std::size_t tn) const {
        if (sid != series_id || ch != channel) return false;
        const std::size_t lo = std::min(t, tn), hi = std::max(t, tn);
        return hi - lo < span;
    }
};

struct RetrievedItem {
    Tensor value;  // [V]
    double distance = 0.0;
    std::string series_id;
    std::size_t channel = 0;
    std::size_t t = 0;
};

class RetrievalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inverted-file store of (latent key, future value) memory units. Built once
/// from train-split pairs; immutable afterwards and safe for concurrent
/// read-only queries. Squared Euclidean metric throughout.
class MemoryIndex {
public:
    struct Entry {
        Tensor latent;  // [d]
        Tensor value;   // [V]
        std::string series_id;
        std::size_t channel = 0;
        std::size_t t = 0;
    };

    MemoryIndex() = default;
    MemoryIndex(const MemoryIndex& o);
    MemoryIndex& operator=(const MemoryIndex& o);

    /// K-means cell construction over the entries' latents. n_cells is
    /// clamped to the entry count (with a stderr warning). Deterministic:
    /// stratified centroid seeding, Lloyd iterations until assignments are
    /// stable or the cap is reached; for very large sets centroids are fitted
    /// on a stratified subsample before the final full assignment.
    static MemoryIndex build(std::vector<Entry> entries, std::size_t n_cells,
                             std::size_t lookback, std::size_t iter_cap = 15);

    /// Builds entries by encoding train-split pairs with the given encoder
    /// snapshot. Throws if any pair is not from the train split.
    static MemoryIndex build_from_pairs(const std::vector<WindowPair>& train_pairs,
                                        const KeyEncoder& encoder, const ParamStore& enc_params,
                                        std::size_t n_cells, std::size_t iter_cap = 15);

    /// Masked top-k search over the n_probe nearest cells. Results are sorted
    /// by ascending distance with ties broken by (series_id, channel, t); if
    /// fewer than k candidates survive the mask, the nearest survivor is
    /// repeated to pad; zero survivors raise RetrievalError.
    std::vector<RetrievedItem> query_topk(const Tensor& query_latent, std::size_t k,
                                          const LeakageMask* mask, std::size_t n_probe) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t n_cells() const { return centroids_.rank() == 2 ? centroids_.rows() : 0; }
    std::size_t latent_dim() const { return d_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t lookback() const { return lookback_; }
    const Entry& entry(std::size_t i) const { return entries_[i]; }

    /// Deliberate corruption hook for ablation studies: replaces the value
    /// window of entry i. Only call before issuing queries.
    void replace_value(std::size_t i, Tensor v);

    // Instrumentation. The query counter increments once per query_topk call;
    // the benchmark asserts it stays flat while timing the parametric path.
    std::uint64_t query_count() const { return query_count_.load(); }
    void reset_query_count() const { query_count_.store(0); }
    /// Post-result mask validation failures (always computed, asserted in
    /// debug builds). Must stay zero.
    std::uint64_t mask_violations() const { return mask_violations_.load(); }

    void save(const std::string& path) const;
    static MemoryIndex load(const std::string& path);

private:
    void assign_cells();

    std::size_t d_ = 0;
    std::size_t horizon_ = 0;
    std::size_t lookback_ = 0;
    Tensor centroids_;  // [n_cells x d]
    std::vector<Entry> entries_;
    std::vector<std::vector<std::uint32_t>> cell_entries_;
    mutable std::atomic<std::uint64_t> query_count_{0};
    mutable std::atomic<std::uint64_t> mask_violations_{0};
};

} // namespace memf
