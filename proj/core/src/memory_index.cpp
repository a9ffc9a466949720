#include "memf/memory_index.hpp"

#include "memf/parallel.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>

namespace memf {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double x = a[i] - b[i];
        acc += x * x;
    }
    return acc;
}

// ---- little-endian binary io -------------------------------------------------

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("index file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double x) {
    std::uint64_t v;
    std::memcpy(&v, &x, 8);
    put_u64(os, v);
}

double get_f64(std::istream& is) {
    const std::uint64_t v = get_u64(is);
    double x;
    std::memcpy(&x, &v, 8);
    return x;
}

constexpr char kMagic[8] = {'M', 'F', 'I', 'D', 'X', '0', '0', '1'};

} // namespace

MemoryIndex::MemoryIndex(const MemoryIndex& o)
    : d_(o.d_), horizon_(o.horizon_), lookback_(o.lookback_), centroids_(o.centroids_),
      entries_(o.entries_), cell_entries_(o.cell_entries_) {}

MemoryIndex& MemoryIndex::operator=(const MemoryIndex& o) {
    if (this != &o) {
        d_ = o.d_;
        horizon_ = o.horizon_;
        lookback_ = o.lookback_;
        centroids_ = o.centroids_;
        entries_ = o.entries_;
        cell_entries_ = o.cell_entries_;
        query_count_.store(0);
        mask_violations_.store(0);
    }
    return *this;
}

void MemoryIndex::assign_cells() {
    const std::size_t n_cells = centroids_.rows();
    std::vector<std::uint32_t> best_cell(entries_.size());
    parallel_for(entries_.size(), [&](std::size_t e) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_cells; ++c) {
            const double dd = sq_dist(entries_[e].latent.data(), centroids_.data() + c * d_, d_);
            if (dd < best_d) {
                best_d = dd;
                best = c;
            }
        }
        best_cell[e] = static_cast<std::uint32_t>(best);
    });
    cell_entries_.assign(n_cells, {});
    for (std::size_t e = 0; e < entries_.size(); ++e)
        cell_entries_[best_cell[e]].push_back(static_cast<std::uint32_t>(e));
}

MemoryIndex MemoryIndex::build(std::vector<Entry> entries, std::size_t n_cells,
                               std::size_t lookback, std::size_t iter_cap) {
    if (entries.empty()) throw std::invalid_argument("MemoryIndex: no entries");
    if (n_cells < 1) throw std::invalid_argument("MemoryIndex: n_cells must be >= 1");
    if (n_cells > entries.size()) {
        std::cerr << "memory_index: clamping n_cells " << n_cells << " to entry count "
                  << entries.size() << "\n";
        n_cells = entries.size();
    }
    MemoryIndex idx;
    idx.d_ = entries[0].latent.numel();
    idx.horizon_ = entries[0].value.numel();
    idx.lookback_ = lookback;
    for (const auto& e : entries)
        if (e.latent.numel() != idx.d_ || e.value.numel() != idx.horizon_)
            throw std::invalid_argument("MemoryIndex: inconsistent entry shapes");
    idx.entries_ = std::move(entries);

    const std::size_t N = idx.entries_.size();
    // k-means on a stratified subsample when the set is large; the final
    // assignment below always covers all entries.
    const std::size_t fit_cap = 20000;
    std::vector<std::uint32_t> fit_ids;
    if (N > fit_cap) {
        fit_ids.reserve(fit_cap);
        for (std::size_t i = 0; i < fit_cap; ++i)
            fit_ids.push_back(static_cast<std::uint32_t>(i * N / fit_cap));
    } else {
        fit_ids.resize(N);
        for (std::size_t i = 0; i < N; ++i) fit_ids[i] = static_cast<std::uint32_t>(i);
    }
    const std::size_t M = fit_ids.size();

    idx.centroids_ = Tensor({n_cells, idx.d_});
    for (std::size_t c = 0; c < n_cells; ++c) {
        const auto& src = idx.entries_[fit_ids[c * M / n_cells]].latent;
        for (std::size_t j = 0; j < idx.d_; ++j) idx.centroids_.at(c, j) = src[j];
    }

    std::vector<std::uint32_t> assign(M, 0);
    std::vector<std::uint32_t> next(M, 0);
    for (std::size_t it = 0; it < iter_cap; ++it) {
        parallel_for(M, [&](std::size_t m) {
            const double* z = idx.entries_[fit_ids[m]].latent.data();
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < n_cells; ++c) {
                const double dd = sq_dist(z, idx.centroids_.data() + c * idx.d_, idx.d_);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            next[m] = static_cast<std::uint32_t>(best);
        });
        bool changed = false;
        for (std::size_t m = 0; m < M; ++m) {
            if (assign[m] != next[m]) {
                assign[m] = next[m];
                changed = true;
            }
        }
        if (!changed && it > 0) break;
        Tensor sums({n_cells, idx.d_});
        std::vector<std::size_t> counts(n_cells, 0);
        for (std::size_t m = 0; m < M; ++m) {
            const double* z = idx.entries_[fit_ids[m]].latent.data();
            double* row = sums.data() + assign[m] * idx.d_;
            for (std::size_t j = 0; j < idx.d_; ++j) row[j] += z[j];
            ++counts[assign[m]];
        }
        for (std::size_t c = 0; c < n_cells; ++c) {
            if (counts[c] == 0) continue;  // empty cell keeps its old centroid
            for (std::size_t j = 0; j < idx.d_; ++j)
                idx.centroids_.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
        }
    }
    idx.assign_cells();
    return idx;
}

MemoryIndex MemoryIndex::build_from_pairs(const std::vector<WindowPair>& train_pairs,
                                          const KeyEncoder& encoder, const ParamStore& enc_params,
                                          std::size_t n_cells, std::size_t iter_cap) {
    if (train_pairs.empty()) throw std::invalid_argument("MemoryIndex: no training pairs");
    std::vector<Entry> entries;
    entries.reserve(train_pairs.size());
    for (const auto& p : train_pairs) {
        if (p.split != Split::Train)
            throw std::invalid_argument("MemoryIndex: entry from non-train split at t=" +
                                        std::to_string(p.t));
        Entry e;
        e.latent = encoder.encode(enc_params, p.key);
        e.value = p.value;
        e.series_id = p.series_id;
        e.channel = p.channel;
        e.t = p.t;
        entries.push_back(std::move(e));
    }
    return build(std::move(entries), n_cells, encoder.lookback(), iter_cap);
}

std::vector<RetrievedItem> MemoryIndex::query_topk(const Tensor& query_latent, std::size_t k,
                                                   const LeakageMask* mask,
                                                   std::size_t n_probe) const {
    if (query_latent.numel() != d_)
        throw std::invalid_argument("query_topk: latent dim " + std::to_string(query_latent.numel()) +
                                    " != index dim " + std::to_string(d_));
    const std::size_t nc = n_cells();
    if (k < 1) throw std::invalid_argument("query_topk: k must be >= 1");
    if (n_probe < 1 || n_probe > nc)
        throw std::invalid_argument("query_topk: n_probe must be in [1, n_cells]");
    query_count_.fetch_add(1, std::memory_order_relaxed);

    // rank cells by centroid distance (ties: lower cell index)
    std::vector<std::pair<double, std::uint32_t>> cell_rank(nc);
    for (std::size_t c = 0; c < nc; ++c)
        cell_rank[c] = {sq_dist(query_latent.data(), centroids_.data() + c * d_, d_),
                        static_cast<std::uint32_t>(c)};
    if (n_probe < nc)
        std::partial_sort(cell_rank.begin(), cell_rank.begin() + static_cast<long>(n_probe),
                          cell_rank.end());

    struct Cand {
        double dist;
        std::uint32_t id;
    };
    std::vector<Cand> cands;
    for (std::size_t p = 0; p < n_probe; ++p) {
        for (std::uint32_t e : cell_entries_[cell_rank[p].second]) {
            const Entry& en = entries_[e];
            if (mask && mask->excludes(en.series_id, en.channel, en.t)) continue;
            cands.push_back({sq_dist(query_latent.data(), en.latent.data(), d_), e});
        }
    }
    if (cands.empty())
        throw RetrievalError("query_topk: zero candidates survive the leakage mask");

    auto order = [this](const Cand& a, const Cand& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        const Entry& ea = entries_[a.id];
        const Entry& eb = entries_[b.id];
        if (ea.series_id != eb.series_id) return ea.series_id < eb.series_id;
        if (ea.channel != eb.channel) return ea.channel < eb.channel;
        return ea.t < eb.t;
    };
    const std::size_t take = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(take), cands.end(), order);

    std::vector<RetrievedItem> out;
    out.reserve(k);
    for (std::size_t i = 0; i < take; ++i) {
        const Entry& en = entries_[cands[i].id];
        out.push_back({en.value, cands[i].dist, en.series_id, en.channel, en.t});
    }
    while (out.size() < k) out.push_back(out.front());  // pad with the nearest survivor

    if (mask) {
        for (const auto& item : out) {
            if (mask->excludes(item.series_id, item.channel, item.t)) {
                mask_violations_.fetch_add(1, std::memory_order_relaxed);
                assert(false && "query_topk: leakage mask violated");
            }
        }
    }
    return out;
}

void MemoryIndex::replace_value(std::size_t i, Tensor v) {
    if (v.numel() != horizon_) throw std::invalid_argument("replace_value: horizon mismatch");
    entries_.at(i).value = std::move(v);
}

void MemoryIndex::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("index save: cannot open " + path);
    os.write(kMagic, 8);
    put_u64(os, 1);  // version
    // series table in order of first appearance
    std::vector<std::string> table;
    std::map<std::string, std::uint64_t> table_pos;
    for (const auto& e : entries_) {
        if (!table_pos.count(e.series_id)) {
            table_pos[e.series_id] = table.size();
            table.push_back(e.series_id);
        }
    }
    put_u64(os, d_);
    put_u64(os, horizon_);
    put_u64(os, lookback_);
    put_u64(os, n_cells());
    put_u64(os, entries_.size());
    put_u64(os, table.size());
    for (const auto& s : table) {
        put_u64(os, s.size());
        os.write(s.data(), static_cast<long>(s.size()));
    }
    for (std::size_t i = 0; i < centroids_.numel(); ++i) put_f64(os, centroids_[i]);
    for (const auto& e : entries_) {
        put_u64(os, table_pos.at(e.series_id));
        put_u64(os, e.channel);
        put_u64(os, e.t);
        for (std::size_t i = 0; i < d_; ++i) put_f64(os, e.latent[i]);
        for (std::size_t i = 0; i < horizon_; ++i) put_f64(os, e.value[i]);
    }
    if (!os) throw std::runtime_error("index save: write failed for " + path);
}

MemoryIndex MemoryIndex::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("index load: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("index load: bad magic in " + path);
    const std::uint64_t version = get_u64(is);
    if (version != 1) throw std::runtime_error("index load: unsupported version");
    MemoryIndex idx;
    idx.d_ = get_u64(is);
    idx.horizon_ = get_u64(is);
    idx.lookback_ = get_u64(is);
    const std::uint64_t n_cells = get_u64(is);
    const std::uint64_t n_entries = get_u64(is);
    const std::uint64_t n_series = get_u64(is);
    std::vector<std::string> table(n_series);
    for (auto& s : table) {
        const std::uint64_t len = get_u64(is);
        s.resize(len);
        is.read(s.data(), static_cast<long>(len));
    }
    idx.centroids_ = Tensor({n_cells, idx.d_});
    for (std::size_t i = 0; i < idx.centroids_.numel(); ++i) idx.centroids_[i] = get_f64(is);
    idx.entries_.resize(n_entries);
    for (auto& e : idx.entries_) {
        const std::uint64_t sid = get_u64(is);
        if (sid >= table.size()) throw std::runtime_error("index load: bad series reference");
        e.series_id = table[sid];
        e.channel = get_u64(is);
        e.t = get_u64(is);
        e.latent = Tensor({idx.d_});
        for (std::size_t i = 0; i < idx.d_; ++i) e.latent[i] = get_f64(is);
        e.value = Tensor({idx.horizon_});
        for (std::size_t i = 0; i < idx.horizon_; ++i) e.value[i] = get_f64(is);
    }
    if (!is) throw std::runtime_error("index load: truncated file " + path);
    // Cell membership is nearest-centroid by invariant, so it is recomputed
    // rather than stored.
    idx.assign_cells();
    return idx;
}

} // namespace memf
