#include "memf/key_encoder.hpp"

#include <stdexcept>

#include "memf/kernels.hpp"

namespace memf {

KeyEncoder::KeyEncoder(std::size_t lookback, std::size_t latent_dim)
    : lookback_(lookback), d_(latent_dim) {
    if (lookback_ == 0 || d_ == 0) throw std::invalid_argument("KeyEncoder: zero dimension");
}

void KeyEncoder::declare(ParamStore& store, Rng& rng) const {
    const std::string p = kPrefix;
    store.add(p + ".w1", glorot_uniform(rng, d_, lookback_));
    store.add(p + ".b1", Tensor::zeros({d_}));
    store.add(p + ".w2", glorot_uniform(rng, d_, d_));
    store.add(p + ".b2", Tensor::zeros({d_}));
}

void KeyEncoder::check_key(const Tensor& key) const {
    if (key.numel() != lookback_)
        throw std::invalid_argument("KeyEncoder: key length " + std::to_string(key.numel()) +
                                    " does not match configured K=" + std::to_string(lookback_));
}

Tensor KeyEncoder::encode(const ParamStore& store, const Tensor& key) const {
    check_key(key);
    const std::string p = kPrefix;
    Tensor x = kern::standardize(key);
    Tensor h = kern::tanh(kern::affine_vec(store.at(p + ".w1"), store.at(p + ".b1"), x));
    return kern::affine_vec(store.at(p + ".w2"), store.at(p + ".b2"), h);
}

Tensor KeyEncoder::encode_batch(const ParamStore& store, const Tensor& keys) const {
    if (keys.rank() != 2 || keys.cols() != lookback_)
        throw std::invalid_argument("KeyEncoder: batch shape " + keys.shape_str());
    const std::string p = kPrefix;
    Tensor X = keys;
    for (std::size_t r = 0; r < X.rows(); ++r) {
        Tensor row({lookback_});
        for (std::size_t i = 0; i < lookback_; ++i) row[i] = X.at(r, i);
        row = kern::standardize(row);
        for (std::size_t i = 0; i < lookback_; ++i) X.at(r, i) = row[i];
    }
    Tensor H = kern::tanh(kern::affine_rows(X, store.at(p + ".w1"), store.at(p + ".b1")));
    return kern::affine_rows(H, store.at(p + ".w2"), store.at(p + ".b2"));
}

Tape::Var KeyEncoder::encode(Tape& tape, Binder& bind, const Tensor& key) const {
    check_key(key);
    const std::string p = kPrefix;
    // Standardization is applied to the constant input before it enters the
    // graph; no gradient flows into the raw window.
    Tape::Var x = tape.leaf(kern::standardize(key));
    Tape::Var h = tape.tanh_(tape.affine(bind(p + ".w1"), bind(p + ".b1"), x));
    return tape.affine(bind(p + ".w2"), bind(p + ".b2"), h);
}

} // namespace memf
