#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "memf/assignment.hpp"
#include "memf/rng.hpp"

using namespace memf;

namespace {

std::vector<Tensor> random_set(Rng& rng, std::size_t m, std::size_t v) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < m; ++i) {
        Tensor t({v});
        for (std::size_t j = 0; j < v; ++j) t[j] = rng.normal();
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace

TEST_CASE("permutation_loss: exact match gives zero loss, identity assignment") {
    std::vector<Tensor> f{Tensor::vec({1, 2}), Tensor::vec({3, 4})};
    auto r = permutation_loss(f, f);
    CHECK(r.loss == 0.0);
    CHECK(r.perm == std::vector<std::size_t>{0, 1});
}

TEST_CASE("permutation_loss: permuted exact match is found") {
    std::vector<Tensor> f{Tensor::vec({1}), Tensor::vec({3})};
    std::vector<Tensor> y{Tensor::vec({3}), Tensor::vec({1})};
    auto r = permutation_loss(f, y);
    CHECK(r.loss == 0.0);
    CHECK(r.perm == std::vector<std::size_t>{1, 0});
}

TEST_CASE("permutation_loss input validation") {
    std::vector<Tensor> f{Tensor::vec({1, 2})};
    std::vector<Tensor> y{Tensor::vec({1, 2}), Tensor::vec({3, 4})};
    CHECK_THROWS_AS(permutation_loss(f, y), std::invalid_argument);
    std::vector<Tensor> big(9, Tensor::vec({1}));
    CHECK_THROWS_AS(permutation_loss(big, big), std::invalid_argument);
    std::vector<Tensor> badlen{Tensor::vec({1, 2})};
    std::vector<Tensor> badlen_y{Tensor::vec({1, 2, 3})};
    CHECK_THROWS_AS(permutation_loss(badlen, badlen_y), std::invalid_argument);
}

TEST_CASE("enumeration equals Hungarian on random instances") {
    Rng rng(101);
    for (int trial = 0; trial < 1500; ++trial) {
        const std::size_t m = 2 + rng.below(5);  // 2..6
        const std::size_t v = 1 + rng.below(8);
        auto f = random_set(rng, m, v);
        auto y = random_set(rng, m, v);
        auto cost = pairwise_sq_costs(f, y);
        auto a = match_enumerate(cost);
        auto b = match_hungarian(cost);
        CHECK(a.loss == b.loss);
    }
}

TEST_CASE("Hungarian handles M = 7, 8 (beyond the enumeration dispatch)") {
    Rng rng(202);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 7 + rng.below(2);
        auto f = random_set(rng, m, 4);
        auto y = random_set(rng, m, 4);
        auto r = permutation_loss(f, y);
        // permutation is a bijection
        std::vector<std::size_t> seen = r.perm;
        std::sort(seen.begin(), seen.end());
        for (std::size_t i = 0; i < m; ++i) CHECK(seen[i] == i);
        // exhaustive reference (7! = 5040, 8! = 40320: still cheap)
        auto cost = pairwise_sq_costs(f, y);
        auto ref = match_enumerate(cost);
        CHECK(r.loss == ref.loss);
    }
}

TEST_CASE("set invariance: shuffling targets never changes the loss") {
    Rng rng(303);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 2 + rng.below(5);
        auto f = random_set(rng, m, 3);
        auto y = random_set(rng, m, 3);
        const double base = permutation_loss(f, y).loss;
        std::vector<Tensor> shuffled = y;
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
        CHECK(permutation_loss(f, shuffled).loss == base);
    }
}

TEST_CASE("identity assignment is an upper bound") {
    Rng rng(404);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 2 + rng.below(5);
        auto f = random_set(rng, m, 5);
        auto y = random_set(rng, m, 5);
        auto r = permutation_loss(f, y);
        double identity_cost = 0.0;
        auto cost = pairwise_sq_costs(f, y);
        for (std::size_t i = 0; i < m; ++i) identity_cost += cost[i][i];
        CHECK(r.loss <= identity_cost);
        // reported loss is consistent with the reported permutation
        double recomputed = 0.0;
        for (std::size_t i = 0; i < m; ++i) recomputed += cost[i][r.perm[i]];
        CHECK(r.loss == recomputed);
    }
}
