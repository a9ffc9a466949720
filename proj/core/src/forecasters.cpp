#include "memf/forecasters.hpp"

#include <cmath>
#include <stdexcept>

#include "memf/kernels.hpp"
#include "memf/rng.hpp"

#include "json.hpp"

namespace memf {

// ---- SeasonalNaive ------------------------------------------------------------

SeasonalNaive::SeasonalNaive(std::size_t period, std::size_t lookback, std::size_t horizon)
    : period_(period), lookback_(lookback), horizon_(horizon) {
    if (period_ < 1 || period_ > lookback_)
        throw std::invalid_argument("SeasonalNaive: need 1 <= period <= lookback");
}

Tensor SeasonalNaive::predict(const Tensor& lookback) const {
    if (lookback.numel() != lookback_)
        throw std::invalid_argument("SeasonalNaive: lookback length mismatch");
    Tensor y({horizon_});
    for (std::size_t j = 0; j < horizon_; ++j)
        y[j] = lookback[lookback_ - period_ + (j % period_)];
    return y;
}

std::uint64_t SeasonalNaive::checksum() const {
    std::uint64_t h = fnv1a(&period_, sizeof(period_));
    h = fnv1a(&lookback_, sizeof(lookback_), h);
    h = fnv1a(&horizon_, sizeof(horizon_), h);
    return h;
}

Checkpoint SeasonalNaive::to_checkpoint(const std::string& config_json) const {
    Checkpoint ck;
    ck.kind = CheckpointKind::SeasonalNaive;
    nlohmann::json j = config_json.empty() ? nlohmann::json::object()
                                           : nlohmann::json::parse(config_json);
    j["forecaster"] = {{"kind", kind()}, {"period", period_}, {"lookback", lookback_}, {"horizon", horizon_}};
    ck.config_json = j.dump();
    return ck;
}

SeasonalNaive SeasonalNaive::from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != CheckpointKind::SeasonalNaive)
        throw std::runtime_error("checkpoint is not a seasonal_naive forecaster");
    const auto j = nlohmann::json::parse(ck.config_json).at("forecaster");
    return SeasonalNaive(j.at("period").get<std::size_t>(), j.at("lookback").get<std::size_t>(),
                         j.at("horizon").get<std::size_t>());
}

// ---- LinearPatchForecaster ------------------------------------------------------

LinearPatchForecaster::LinearPatchForecaster(Tensor W, Tensor bias, double lambda)
    : W_(std::move(W)), bias_(std::move(bias)), lambda_(lambda) {
    if (W_.rank() != 2 || bias_.numel() != W_.rows())
        throw std::invalid_argument("LinearPatchForecaster: inconsistent W/bias");
}

Tensor LinearPatchForecaster::predict(const Tensor& lookback) const {
    if (lookback.numel() != W_.cols())
        throw std::invalid_argument("LinearPatchForecaster: lookback length mismatch");
    return kern::affine_vec(W_, bias_, lookback);
}

std::uint64_t LinearPatchForecaster::checksum() const {
    std::uint64_t h = fnv1a(W_.data(), W_.numel() * sizeof(double));
    h = fnv1a(bias_.data(), bias_.numel() * sizeof(double), h);
    h = fnv1a(&lambda_, sizeof(lambda_), h);
    return h;
}

Checkpoint LinearPatchForecaster::to_checkpoint(const std::string& config_json) const {
    Checkpoint ck;
    ck.kind = CheckpointKind::LinearPatch;
    nlohmann::json j = config_json.empty() ? nlohmann::json::object()
                                           : nlohmann::json::parse(config_json);
    j["forecaster"] = {{"kind", kind()}, {"lambda", lambda_}};
    ck.config_json = j.dump();
    ck.params.emplace_back("ridge.w", W_);
    ck.params.emplace_back("ridge.b", bias_);
    return ck;
}

LinearPatchForecaster LinearPatchForecaster::from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != CheckpointKind::LinearPatch)
        throw std::runtime_error("checkpoint is not a linear_patch forecaster");
    const auto j = nlohmann::json::parse(ck.config_json).at("forecaster");
    Tensor W, b;
    for (const auto& [name, t] : ck.params) {
        if (name == "ridge.w") W = t;
        if (name == "ridge.b") b = t;
    }
    return LinearPatchForecaster(std::move(W), std::move(b), j.at("lambda").get<double>());
}

LinearPatchForecaster fit_ridge(const std::vector<WindowPair>& corpus, double lambda) {
    if (corpus.empty()) throw std::invalid_argument("fit_ridge: empty corpus");
    if (lambda < 0.0) throw std::invalid_argument("fit_ridge: lambda must be >= 0");
    const std::size_t K = corpus[0].key.numel();
    const std::size_t V = corpus[0].value.numel();
    const std::size_t N = corpus.size();
    if (N < K + V)
        throw std::invalid_argument("fit_ridge: need at least K+V samples, got " + std::to_string(N));

    Tensor x_mean({K}), y_mean({V});
    for (const auto& p : corpus) {
        for (std::size_t i = 0; i < K; ++i) x_mean[i] += p.key[i];
        for (std::size_t i = 0; i < V; ++i) y_mean[i] += p.value[i];
    }
    for (std::size_t i = 0; i < K; ++i) x_mean[i] /= static_cast<double>(N);
    for (std::size_t i = 0; i < V; ++i) y_mean[i] /= static_cast<double>(N);

    // A = Xc Xc^T  [K x K],  B = Xc Yc^T  [K x V]
    Tensor A({K, K}), B({K, V});
    for (const auto& p : corpus) {
        std::vector<double> xc(K), yc(V);
        for (std::size_t i = 0; i < K; ++i) xc[i] = p.key[i] - x_mean[i];
        for (std::size_t i = 0; i < V; ++i) yc[i] = p.value[i] - y_mean[i];
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) A.at(i, j) += xc[i] * xc[j];
            for (std::size_t j = 0; j < V; ++j) B.at(i, j) += xc[i] * yc[j];
        }
    }
    double scale = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        A.at(i, i) += lambda;
        scale = std::max(scale, std::fabs(A.at(i, i)));
    }

    // Gaussian elimination with partial pivoting on [A | B].
    std::vector<std::size_t> perm(K);
    for (std::size_t i = 0; i < K; ++i) perm[i] = i;
    for (std::size_t col = 0; col < K; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < K; ++r)
            if (std::fabs(A.at(r, col)) > std::fabs(A.at(piv, col))) piv = r;
        if (std::fabs(A.at(piv, col)) < 1e-12 * std::max(scale, 1.0)) {
            if (lambda == 0.0)
                throw std::runtime_error(
                    "fit_ridge: singular normal matrix; use lambda > 0 to regularize");
            throw std::runtime_error("fit_ridge: normal matrix numerically singular");
        }
        if (piv != col) {
            for (std::size_t j = 0; j < K; ++j) std::swap(A.at(col, j), A.at(piv, j));
            for (std::size_t j = 0; j < V; ++j) std::swap(B.at(col, j), B.at(piv, j));
        }
        const double d = A.at(col, col);
        for (std::size_t r = col + 1; r < K; ++r) {
            const double f = A.at(r, col) / d;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < K; ++j) A.at(r, j) -= f * A.at(col, j);
            for (std::size_t j = 0; j < V; ++j) B.at(r, j) -= f * B.at(col, j);
        }
    }
    // back substitution: A upper-triangular, solve A * Wt = B
    Tensor Wt({K, V});
    for (std::size_t r = K; r-- > 0;) {
        for (std::size_t j = 0; j < V; ++j) {
            double acc = B.at(r, j);
            for (std::size_t c = r + 1; c < K; ++c) acc -= A.at(r, c) * Wt.at(c, j);
            Wt.at(r, j) = acc / A.at(r, r);
        }
    }
    Tensor W({V, K});
    for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < K; ++j) W.at(i, j) = Wt.at(j, i);

    Tensor bias({V});
    for (std::size_t i = 0; i < V; ++i) {
        double acc = y_mean[i];
        for (std::size_t j = 0; j < K; ++j) acc -= W.at(i, j) * x_mean[j];
        bias[i] = acc;
    }
    return LinearPatchForecaster(std::move(W), std::move(bias), lambda);
}

std::unique_ptr<BaseForecaster> forecaster_from_checkpoint(const Checkpoint& ck) {
    switch (ck.kind) {
        case CheckpointKind::SeasonalNaive:
            return std::make_unique<SeasonalNaive>(SeasonalNaive::from_checkpoint(ck));
        case CheckpointKind::LinearPatch:
            return std::make_unique<LinearPatchForecaster>(LinearPatchForecaster::from_checkpoint(ck));
        default:
            throw std::runtime_error("checkpoint kind is not a forecaster: " +
                                     std::string(checkpoint_kind_name(ck.kind)));
    }
}

} // namespace memf
