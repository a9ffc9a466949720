#include "memf/assignment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "memf/kernels.hpp"

namespace memf {

std::vector<std::vector<double>> pairwise_sq_costs(const std::vector<Tensor>& forecasts,
                                                   const std::vector<Tensor>& targets) {
    if (forecasts.size() != targets.size())
        throw std::invalid_argument("permutation_loss: forecast/target count mismatch (" +
                                    std::to_string(forecasts.size()) + " vs " +
                                    std::to_string(targets.size()) + ")");
    const std::size_t m = forecasts.size();
    std::vector<std::vector<double>> cost(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) cost[i][j] = kern::sse(forecasts[i], targets[j]);
    return cost;
}

namespace {
MatchResult finalize(const std::vector<std::vector<double>>& cost,
                     std::vector<std::size_t> perm) {
    MatchResult r;
    r.per_branch_sq_error.resize(perm.size());
    double loss = 0.0;
    for (std::size_t m = 0; m < perm.size(); ++m) {
        r.per_branch_sq_error[m] = cost[m][perm[m]];
        loss += cost[m][perm[m]];
    }
    r.loss = loss;
    r.perm = std::move(perm);
    return r;
}
} // namespace

MatchResult match_enumerate(const std::vector<std::vector<double>>& cost) {
    const std::size_t m = cost.size();
    std::vector<std::size_t> idx(m), best(m);
    std::iota(idx.begin(), idx.end(), 0);
    best = idx;
    double best_sum = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += cost[i][idx[i]];
        if (s < best_sum) {
            best_sum = s;
            best = idx;
        }
    } while (std::next_permutation(idx.begin(), idx.end()));
    return finalize(cost, std::move(best));
}

MatchResult match_hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    // Potentials formulation with 1-based sentinel column 0.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> perm(n);
    for (int j = 1; j <= n; ++j) perm[static_cast<std::size_t>(p[j] - 1)] = static_cast<std::size_t>(j - 1);
    return finalize(cost, std::move(perm));
}

MatchResult permutation_loss(const std::vector<Tensor>& forecasts,
                             const std::vector<Tensor>& targets, std::size_t max_branches) {
    if (forecasts.empty()) throw std::invalid_argument("permutation_loss: empty forecast set");
    if (forecasts.size() > max_branches)
        throw std::invalid_argument("permutation_loss: branch count " +
                                    std::to_string(forecasts.size()) + " exceeds cap " +
                                    std::to_string(max_branches));
    for (std::size_t i = 0; i < forecasts.size(); ++i)
        if (!forecasts[i].same_shape(targets[i]) || !forecasts[i].same_shape(forecasts[0]))
            throw std::invalid_argument("permutation_loss: horizon length mismatch");
    auto cost = pairwise_sq_costs(forecasts, targets);
    return forecasts.size() <= 6 ? match_enumerate(cost) : match_hungarian(cost);
}

} // namespace memf
