#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "memf/tape.hpp"
#include "memf/tensor.hpp"

namespace memf {

enum class CheckpointKind : std::uint32_t {
    KeyEncoder = 1,
    Kpm = 2,
    Fusion = 3,
    SeasonalNaive = 4,
    LinearPatch = 5,
};

const char* checkpoint_kind_name(CheckpointKind k);

/// Shared binary framing for every trained artifact: magic, version, kind,
/// a self-describing JSON config header (config + tool version + seed), then
/// named parameter blocks as little-endian f64. Byte-stable across
/// save -> load -> save.
struct Checkpoint {
    CheckpointKind kind = CheckpointKind::KeyEncoder;
    std::string config_json;
    std::vector<std::pair<std::string, Tensor>> params;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
    /// Parses without failing on kind, for error messages.
    static CheckpointKind peek_kind(const std::string& path);

    void put_store(const ParamStore& store);
    ParamStore to_store() const;
};

} // namespace memf
