#include "memf/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace memf {

void AdamState::update(ParamStore& params, const GradStore& grads, const AdamConfig& cfg) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("adam: learning rate must be positive");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params.items()) {
        const Tensor* g = grads.find(name);
        if (!g) continue;
        if (!g->same_shape(p))
            throw std::invalid_argument("adam: gradient shape mismatch for " + name);
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            it = moments_.emplace(name, Moments{Tensor::zeros(p.shape()), Tensor::zeros(p.shape())}).first;
        }
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = (*g)[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace memf
