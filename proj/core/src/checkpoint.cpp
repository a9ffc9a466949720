#include "memf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace memf {

namespace {

constexpr char kMagic[8] = {'M', 'F', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

const char* checkpoint_kind_name(CheckpointKind k) {
    switch (k) {
        case CheckpointKind::KeyEncoder: return "key_encoder";
        case CheckpointKind::Kpm: return "kpm";
        case CheckpointKind::Fusion: return "fusion";
        case CheckpointKind::SeasonalNaive: return "seasonal_naive";
        case CheckpointKind::LinearPatch: return "linear_patch";
    }
    return "?";
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint save: cannot open " + path);
    os.write(kMagic, 8);
    put_u32(os, 1);
    put_u32(os, static_cast<std::uint32_t>(kind));
    put_u64(os, config_json.size());
    os.write(config_json.data(), static_cast<long>(config_json.size()));
    put_u64(os, params.size());
    for (const auto& [name, t] : params) {
        put_u64(os, name.size());
        os.write(name.data(), static_cast<long>(name.size()));
        put_u64(os, t.rank());
        for (std::size_t d : t.shape()) put_u64(os, d);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::uint64_t bits;
            const double x = t[i];
            std::memcpy(&bits, &x, 8);
            put_u64(os, bits);
        }
    }
    if (!os) throw std::runtime_error("checkpoint save: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint load: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint load: bad magic in " + path);
    const std::uint32_t version = get_u32(is);
    if (version != 1) throw std::runtime_error("checkpoint load: unsupported version");
    Checkpoint ck;
    ck.kind = static_cast<CheckpointKind>(get_u32(is));
    const std::uint64_t jlen = get_u64(is);
    ck.config_json.resize(jlen);
    is.read(ck.config_json.data(), static_cast<long>(jlen));
    const std::uint64_t n = get_u64(is);
    ck.params.reserve(n);
    for (std::uint64_t p = 0; p < n; ++p) {
        const std::uint64_t nlen = get_u64(is);
        std::string name(nlen, '\0');
        is.read(name.data(), static_cast<long>(nlen));
        const std::uint64_t rank = get_u64(is);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = get_u64(is);
        Tensor t(shape);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const std::uint64_t bits = get_u64(is);
            double x;
            std::memcpy(&x, &bits, 8);
            t[i] = x;
        }
        ck.params.emplace_back(std::move(name), std::move(t));
    }
    if (!is) throw std::runtime_error("checkpoint load: truncated file " + path);
    return ck;
}

CheckpointKind Checkpoint::peek_kind(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    get_u32(is);
    return static_cast<CheckpointKind>(get_u32(is));
}

void Checkpoint::put_store(const ParamStore& store) {
    params.clear();
    for (const auto& item : store.items()) params.push_back(item);
}

ParamStore Checkpoint::to_store() const {
    ParamStore s;
    for (const auto& [name, t] : params) s.add(name, t);
    return s;
}

} // namespace memf
