#pragma once

#include <cstddef>
#include <vector>

#include "memf/tensor.hpp"

namespace memf {

/// Result of matching M forecasts against M targets under summed squared L2
/// error. `perm[m]` is the target assigned to branch m; the reported loss is
/// sum_m cost[m][perm[m]] accumulated in branch order, and no other bijection
/// yields a smaller sum.
struct MatchResult {
    std::vector<std::size_t> perm;
    double loss = 0.0;
    std::vector<double> per_branch_sq_error;
};

/// cost[m][n] = ||forecast_m - target_n||^2.
std::vector<std::vector<double>> pairwise_sq_costs(const std::vector<Tensor>& forecasts,
                                                   const std::vector<Tensor>& targets);

/// Exhaustive search over all M! bijections. Ties resolve to the
/// lexicographically smallest permutation.
MatchResult match_enumerate(const std::vector<std::vector<double>>& cost);

/// O(M^3) Hungarian (potentials / shortest augmenting path) solver.
MatchResult match_hungarian(const std::vector<std::vector<double>>& cost);

/// Set-matching loss: enumeration for M <= 6, Hungarian above that, hard cap
/// at `max_branches`. Throws on count/length mismatch.
MatchResult permutation_loss(const std::vector<Tensor>& forecasts,
                             const std::vector<Tensor>& targets,
                             std::size_t max_branches = 8);

} // namespace memf
