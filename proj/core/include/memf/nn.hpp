#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "memf/kernels.hpp"
#include "memf/rng.hpp"
#include "memf/tape.hpp"

namespace memf {

/// Glorot-uniform weight matrix [rows x cols]: uniform in +-sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols);

/// Binds ParamStore entries to tape leaves, one leaf per parameter per tape.
class Binder {
public:
    Binder(Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}
    Tape::Var operator()(const std::string& name);
    ParamStore& store() { return store_; }

private:
    Tape& tape_;
    ParamStore& store_;
    std::unordered_map<std::string, Tape::Var> cache_;
};

/// Pre-LN transformer encoder block with per-head projection matrices and a
/// GELU feed-forward of width 4*d. Declared into a ParamStore under a name
/// prefix; the tape path and the kernel (inference) path share the same
/// arithmetic and agree bit-for-bit.
class TransformerLayer {
public:
    TransformerLayer(std::string prefix, std::size_t d, std::size_t heads);

    void declare(ParamStore& store, Rng& rng) const;

    /// Tape path. X is [T x d]; returns [T x d].
    Tape::Var forward(Tape& tape, Binder& bind, Tape::Var X) const;

    /// Kernel path for a single sample, [T x d] in, [T x d] out.
    Tensor infer(const ParamStore& store, const Tensor& X) const;

    /// Kernel path over B stacked samples of T tokens each: X_all is
    /// [(B*T) x d]; attention never crosses sample boundaries. Row blocks are
    /// processed with the same kernels as infer(), so results match it.
    Tensor infer_batch(const ParamStore& store, const Tensor& X_all, std::size_t tokens) const;

    std::size_t dim() const { return d_; }
    std::size_t heads() const { return heads_; }

private:
    std::string p_;
    std::size_t d_;
    std::size_t heads_;
    std::size_t dk_;
};

/// A stack of identical-width transformer layers sharing nothing but the
/// prefix convention `<prefix>.<layer>`.
class TransformerStack {
public:
    TransformerStack(std::string prefix, std::size_t d, std::size_t heads, std::size_t depth);

    void declare(ParamStore& store, Rng& rng) const;
    Tape::Var forward(Tape& tape, Binder& bind, Tape::Var X) const;
    Tensor infer(const ParamStore& store, Tensor X) const;
    Tensor infer_batch(const ParamStore& store, Tensor X_all, std::size_t tokens) const;

private:
    std::vector<TransformerLayer> layers_;
};

} // namespace memf
