#include "memf/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace memf {

Tensor glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
    return t;
}

Tape::Var Binder::operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Tape::Var v = tape_.param(name, store_.at(name));
    cache_[name] = v;
    return v;
}

// ---- TransformerLayer --------------------------------------------------------

TransformerLayer::TransformerLayer(std::string prefix, std::size_t d, std::size_t heads)
    : p_(std::move(prefix)), d_(d), heads_(heads) {
    if (heads_ == 0 || d_ % heads_ != 0)
        throw std::invalid_argument("TransformerLayer: heads must divide width");
    dk_ = d_ / heads_;
}

void TransformerLayer::declare(ParamStore& store, Rng& rng) const {
    store.add(p_ + ".ln1.gain", Tensor::full({d_}, 1.0));
    store.add(p_ + ".ln1.bias", Tensor::zeros({d_}));
    for (std::size_t h = 0; h < heads_; ++h) {
        store.add(p_ + ".attn.q" + std::to_string(h), glorot_uniform(rng, dk_, d_));
        store.add(p_ + ".attn.k" + std::to_string(h), glorot_uniform(rng, dk_, d_));
        store.add(p_ + ".attn.v" + std::to_string(h), glorot_uniform(rng, dk_, d_));
    }
    store.add(p_ + ".attn.out.w", glorot_uniform(rng, d_, d_));
    store.add(p_ + ".attn.out.b", Tensor::zeros({d_}));
    store.add(p_ + ".ln2.gain", Tensor::full({d_}, 1.0));
    store.add(p_ + ".ln2.bias", Tensor::zeros({d_}));
    store.add(p_ + ".ffn.w1", glorot_uniform(rng, 4 * d_, d_));
    store.add(p_ + ".ffn.b1", Tensor::zeros({4 * d_}));
    store.add(p_ + ".ffn.w2", glorot_uniform(rng, d_, 4 * d_));
    store.add(p_ + ".ffn.b2", Tensor::zeros({d_}));
}

Tape::Var TransformerLayer::forward(Tape& tape, Binder& bind, Tape::Var X) const {
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk_));
    Tape::Var a = tape.layer_norm(X, bind(p_ + ".ln1.gain"), bind(p_ + ".ln1.bias"));
    std::vector<Tape::Var> head_outs;
    head_outs.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
        const std::string hs = std::to_string(h);
        Tape::Var Q = tape.matmul_nt(a, bind(p_ + ".attn.q" + hs));
        Tape::Var K = tape.matmul_nt(a, bind(p_ + ".attn.k" + hs));
        Tape::Var V = tape.matmul_nt(a, bind(p_ + ".attn.v" + hs));
        Tape::Var S = tape.scale(tape.matmul_nt(Q, K), inv_sqrt_dk);
        Tape::Var P = tape.softmax(S);
        head_outs.push_back(tape.matmul(P, V));
    }
    Tape::Var A = heads_ == 1 ? head_outs[0] : tape.concat_cols(head_outs);
    Tape::Var o = tape.affine(bind(p_ + ".attn.out.w"), bind(p_ + ".attn.out.b"), A);
    Tape::Var x1 = tape.add(X, o);

    Tape::Var f = tape.layer_norm(x1, bind(p_ + ".ln2.gain"), bind(p_ + ".ln2.bias"));
    Tape::Var h1 = tape.gelu(tape.affine(bind(p_ + ".ffn.w1"), bind(p_ + ".ffn.b1"), f));
    Tape::Var h2 = tape.affine(bind(p_ + ".ffn.w2"), bind(p_ + ".ffn.b2"), h1);
    return tape.add(x1, h2);
}

Tensor TransformerLayer::infer(const ParamStore& store, const Tensor& X) const {
    return infer_batch(store, X, X.rows());
}

Tensor TransformerLayer::infer_batch(const ParamStore& store, const Tensor& X_all,
                                     std::size_t tokens) const {
    if (X_all.rank() != 2 || X_all.cols() != d_ || tokens == 0 || X_all.rows() % tokens != 0)
        throw std::invalid_argument("TransformerLayer: bad token layout " + X_all.shape_str());
    const std::size_t samples = X_all.rows() / tokens;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk_));

    Tensor a = kern::layer_norm(X_all, store.at(p_ + ".ln1.gain"), store.at(p_ + ".ln1.bias"));
    Tensor A({X_all.rows(), d_});
    for (std::size_t h = 0; h < heads_; ++h) {
        const std::string hs = std::to_string(h);
        // Projections are batched across samples; the T x T attention core is
        // per sample.
        Tensor Q = kern::matmul_nt(a, store.at(p_ + ".attn.q" + hs));
        Tensor K = kern::matmul_nt(a, store.at(p_ + ".attn.k" + hs));
        Tensor V = kern::matmul_nt(a, store.at(p_ + ".attn.v" + hs));
        for (std::size_t s = 0; s < samples; ++s) {
            Tensor Qs({tokens, dk_}), Ks({tokens, dk_}), Vs({tokens, dk_});
            const std::size_t base = s * tokens * dk_;
            for (std::size_t i = 0; i < tokens * dk_; ++i) {
                Qs[i] = Q[base + i];
                Ks[i] = K[base + i];
                Vs[i] = V[base + i];
            }
            Tensor P = kern::softmax(kern::scale(kern::matmul_nt(Qs, Ks), inv_sqrt_dk));
            Tensor Ah = kern::matmul(P, Vs);
            for (std::size_t t = 0; t < tokens; ++t)
                for (std::size_t j = 0; j < dk_; ++j)
                    A.data()[(s * tokens + t) * d_ + h * dk_ + j] = Ah.data()[t * dk_ + j];
        }
    }
    Tensor o = kern::affine_rows(A, store.at(p_ + ".attn.out.w"), store.at(p_ + ".attn.out.b"));
    Tensor x1 = kern::add(X_all, o);

    Tensor f = kern::layer_norm(x1, store.at(p_ + ".ln2.gain"), store.at(p_ + ".ln2.bias"));
    Tensor h1 = kern::gelu(kern::affine_rows(f, store.at(p_ + ".ffn.w1"), store.at(p_ + ".ffn.b1")));
    Tensor h2 = kern::affine_rows(h1, store.at(p_ + ".ffn.w2"), store.at(p_ + ".ffn.b2"));
    return kern::add(x1, h2);
}

// ---- TransformerStack --------------------------------------------------------

TransformerStack::TransformerStack(std::string prefix, std::size_t d, std::size_t heads,
                                   std::size_t depth) {
    for (std::size_t l = 0; l < depth; ++l)
        layers_.emplace_back(prefix + "." + std::to_string(l), d, heads);
}

void TransformerStack::declare(ParamStore& store, Rng& rng) const {
    for (const auto& l : layers_) l.declare(store, rng);
}

Tape::Var TransformerStack::forward(Tape& tape, Binder& bind, Tape::Var X) const {
    for (const auto& l : layers_) X = l.forward(tape, bind, X);
    return X;
}

Tensor TransformerStack::infer(const ParamStore& store, Tensor X) const {
    for (const auto& l : layers_) X = l.infer(store, X);
    return X;
}

Tensor TransformerStack::infer_batch(const ParamStore& store, Tensor X_all,
                                     std::size_t tokens) const {
    for (const auto& l : layers_) X_all = l.infer_batch(store, X_all, tokens);
    return X_all;
}

} // namespace memf
