#include "doctest.h"

#include <cmath>

#include "memf/fusion.hpp"
#include "memf/graph.hpp"
#include "memf/kernels.hpp"

using namespace memf;

namespace {

FusionConfig tiny_config(bool gated = true, std::size_t m = 2) {
    FusionConfig c;
    c.token_dim = 8;
    c.branches = m;
    c.horizon = 4;
    c.p_mem = 0.3;
    c.p_base = 0.1;
    c.tau = 1.0;
    c.depth = 1;
    c.heads = 2;
    c.gated = gated;
    return c;
}

std::vector<Tensor> tiny_candidates(Rng& rng, std::size_t m, std::size_t v) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < m; ++i) {
        Tensor t({v});
        for (std::size_t j = 0; j < v; ++j) t[j] = rng.normal();
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace

TEST_CASE("fusion config invariants") {
    FusionConfig c = tiny_config();
    c.p_base = 0.5;
    c.p_mem = 0.3;  // p_base > p_mem
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config();
    c.tau = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    const std::string j = tiny_config().to_json();
    CHECK(FusionConfig::from_json(j).token_dim == 8);
}

TEST_CASE("zero gate reproduces the base prediction bit-exactly") {
    FusionConfig cfg = tiny_config();
    FusionModel model(cfg);
    Rng rng(1);
    ParamStore store;
    model.declare(store, rng);  // gate starts at zeros
    Rng crng(2);
    const Tensor base = Tensor::vec({0.5, -1.0, 2.5, 0.0});
    auto bundle = model.infer(store, base, tiny_candidates(crng, 2, 4));
    CHECK(bundle.fused.raw() == base.raw());
}

TEST_CASE("pooling weights: simplex, symmetry, temperature concentration") {
    FusionConfig cfg = tiny_config();
    FusionModel model(cfg);
    Rng rng(3);
    ParamStore store;
    model.declare(store, rng);
    Rng crng(4);
    const Tensor base = Tensor::vec({0.1, 0.2, 0.3, 0.4});
    auto cands = tiny_candidates(crng, 2, 4);

    auto bundle = model.infer(store, base, cands);
    double sum = 0.0;
    for (double w : bundle.weights) {
        CHECK(w > 0.0);
        sum += w;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);

    // equal tokens + zeroed encoder/scoring -> uniform weights
    ParamStore uniform_store;
    model.declare(uniform_store, rng);
    for (auto& [name, t] : uniform_store.items()) {
        const bool is_gain = name.find(".gain") != std::string::npos;
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = is_gain ? 1.0 : 0.0;
    }
    auto uniform = model.infer(uniform_store, base, cands);
    for (double w : uniform.weights) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-14));

    // tiny temperature concentrates on the argmax score
    FusionConfig sharp = tiny_config();
    sharp.tau = 1e-6;
    FusionModel sharp_model(sharp);
    auto sharp_bundle = sharp_model.infer(store, base, cands);
    double max_w = 0.0;
    for (double w : sharp_bundle.weights) max_w = std::max(max_w, w);
    CHECK(max_w > 0.999);
}

TEST_CASE("bounded correction: |fused - base| <= |gate| elementwise") {
    FusionConfig cfg = tiny_config();
    FusionModel model(cfg);
    Rng rng(5);
    ParamStore store;
    model.declare(store, rng);
    Tensor& gate = store.at("fus.gate");
    Rng grng(6);
    for (std::size_t i = 0; i < gate.numel(); ++i) gate[i] = grng.normal();
    Rng crng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor base({4});
        for (int j = 0; j < 4; ++j) base[j] = crng.normal();
        auto bundle = model.infer(store, base, tiny_candidates(crng, 2, 4));
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(std::fabs(bundle.fused[j] - base[j]) <= std::fabs(gate[j]));
        // bundle invariant: fused - base == gate * tanh(head(z_fused))
        CHECK(bundle.gate_snapshot.raw() == gate.raw());
    }
}

TEST_CASE("eval-mode determinism and tape/kernel parity") {
    FusionConfig cfg = tiny_config();
    FusionModel model(cfg);
    Rng rng(8);
    ParamStore store;
    model.declare(store, rng);
    Tensor& gate = store.at("fus.gate");
    for (std::size_t i = 0; i < gate.numel(); ++i) gate[i] = 0.3 + 0.1 * double(i);
    Rng crng(9);
    const Tensor base = Tensor::vec({1.0, 0.5, -0.5, 0.2});
    auto cands = tiny_candidates(crng, 2, 4);

    auto b1 = model.infer(store, base, cands);
    auto b2 = model.infer(store, base, cands);
    CHECK(b1.fused.raw() == b2.fused.raw());

    Tape tape;
    Binder bind(tape, store);
    Rng drop_rng(10);
    std::vector<Tape::Var> cvs;
    for (const auto& c : cands) cvs.push_back(tape.leaf(c));
    auto fused_var = model.forward(tape, bind, tape.leaf(base), cvs, drop_rng, false);
    CHECK(tape.value(fused_var).raw() == b1.fused.raw());
}

TEST_CASE("truncated candidate sets use the first-k positions plus the base slot") {
    FusionConfig cfg = tiny_config(true, 3);
    FusionModel model(cfg);
    Rng rng(11);
    ParamStore store;
    model.declare(store, rng);
    Rng crng(12);
    const Tensor base = Tensor::vec({0.0, 1.0, 0.0, -1.0});
    auto cands = tiny_candidates(crng, 3, 4);
    auto full = model.infer(store, base, cands);
    CHECK(full.weights.size() == 4);
    std::vector<Tensor> first2{cands[0], cands[1]};
    auto truncated = model.infer(store, base, first2);
    CHECK(truncated.weights.size() == 3);
    CHECK_THROWS_AS(model.infer(store, base, std::vector<Tensor>{}), std::invalid_argument);
    std::vector<Tensor> toomany(4, cands[0]);
    CHECK_THROWS_AS(model.infer(store, base, toomany), std::invalid_argument);
}

TEST_CASE("fusion gradients match finite differences") {
    FusionConfig cfg = tiny_config();
    FusionModel model(cfg);
    Rng rng(13);
    ParamStore params;
    model.declare(params, rng);
    // non-zero gate so its gradient path is exercised
    for (std::size_t i = 0; i < params.at("fus.gate").numel(); ++i)
        params.at("fus.gate")[i] = 0.2 + 0.05 * double(i);
    Rng crng(14);
    const auto cands = tiny_candidates(crng, 2, 4);
    const Tensor target = Tensor::vec({0.3, -0.2, 0.8, 0.1});
    ComputeGraph g(
        [&model, &cands, &target](Tape& t, const std::map<std::string, Tape::Var>& in,
                                  ParamStore& p) {
            Binder bind(t, p);
            Rng no_drop(0);
            std::vector<Tape::Var> cvs;
            for (const auto& c : cands) cvs.push_back(t.leaf(c));
            auto fused = model.forward(t, bind, in.at("base"), cvs, no_drop, false);
            std::map<std::string, Tape::Var> o;
            o["out"] = t.sse(fused, t.leaf(target));
            return o;
        },
        std::move(params), {{"base", {4}}});
    auto rep = g.check_gradients({{"base", Tensor::vec({0.1, 0.4, -0.3, 0.6})}}, 1e-5, 1e-4);
    INFO("max rel error ", rep.max_rel_error);
    CHECK(rep.passed);
}

TEST_CASE("ungated variant differs from gated by the tanh curvature when gate is ones") {
    FusionConfig gated_cfg = tiny_config(true);
    FusionConfig plain_cfg = tiny_config(false);
    FusionModel gated(gated_cfg), plain(plain_cfg);
    Rng rng(15);
    ParamStore store;
    gated.declare(store, rng);
    Tensor& gate = store.at("fus.gate");
    for (std::size_t i = 0; i < gate.numel(); ++i) gate[i] = 1.0;
    // shrink the head so |u| is small and |u - tanh(u)| bounds the gap
    Tensor& hw = store.at("fus.head.w");
    for (std::size_t i = 0; i < hw.numel(); ++i) hw[i] *= 0.05;
    Rng crng(16);
    const Tensor base = Tensor::vec({0.2, -0.1, 0.5, 0.3});
    const auto cands = tiny_candidates(crng, 2, 4);
    auto g_out = gated.infer(store, base, cands);
    auto p_out = plain.infer(store, base, cands);
    for (std::size_t j = 0; j < 4; ++j) {
        const double u = p_out.fused[j] - base[j];  // raw head output
        const double gap = std::fabs(g_out.fused[j] - p_out.fused[j]);
        CHECK(gap <= std::fabs(u - std::tanh(u)) + 1e-15);
    }
    // head output of exactly zero makes both variants return the base
    ParamStore zero_store;
    gated.declare(zero_store, rng);
    Tensor& zw = zero_store.at("fus.head.w");
    Tensor& zb = zero_store.at("fus.head.b");
    for (std::size_t i = 0; i < zw.numel(); ++i) zw[i] = 0.0;
    for (std::size_t i = 0; i < zb.numel(); ++i) zb[i] = 0.0;
    CHECK(gated.infer(zero_store, base, cands).fused.raw() == base.raw());
    CHECK(plain.infer(zero_store, base, cands).fused.raw() == base.raw());
}

TEST_CASE("train_fusion: helpful candidates beat the base, zero steps is the init forward") {
    Rng rng(17);
    const std::size_t V = 4;
    // base is off by a constant bias; candidates sit on the target
    std::vector<FusionSample> train, val;
    Rng srng(18);
    for (int i = 0; i < 80; ++i) {
        FusionSample s;
        s.target = Tensor({V});
        for (std::size_t j = 0; j < V; ++j) s.target[j] = srng.normal();
        s.base = s.target;
        for (std::size_t j = 0; j < V; ++j) s.base[j] += 1.5;
        s.candidates = {s.target, s.target};
        (i % 5 == 0 ? val : train).push_back(std::move(s));
    }
    FusionConfig cfg = tiny_config();
    FusionModel model(cfg);
    ParamStore store;
    model.declare(store, rng);
    const ParamStore init_store = store;

    FusionTrainHyper hyper;
    hyper.lr = 5e-3;
    hyper.batch = 16;
    hyper.max_epochs = 60;
    hyper.patience = 60;
    hyper.seed = 19;
    train_fusion(model, store, train, val, hyper);

    double fused_mse = 0.0, base_mse = 0.0;
    for (const auto& s : val) {
        fused_mse += kern::sse(model.infer(store, s.base, s.candidates).fused, s.target);
        base_mse += kern::sse(s.base, s.target);
    }
    CHECK(fused_mse < base_mse);

    // regression guard: an untrained store still produces the init forward
    auto b = model.infer(init_store, val[0].base, val[0].candidates);
    CHECK(b.fused.raw() == val[0].base.raw());  // zero gate at init
}

TEST_CASE("train_fusion: pure-noise candidates do not hurt a perfect base") {
    Rng srng(20);
    const std::size_t V = 4;
    std::vector<FusionSample> train, val;
    for (int i = 0; i < 80; ++i) {
        FusionSample s;
        s.target = Tensor({V});
        for (std::size_t j = 0; j < V; ++j) s.target[j] = srng.normal();
        s.base = s.target;
        Tensor n1({V}), n2({V});
        for (std::size_t j = 0; j < V; ++j) {
            n1[j] = srng.normal();
            n2[j] = srng.normal();
        }
        s.candidates = {n1, n2};
        (i % 5 == 0 ? val : train).push_back(std::move(s));
    }
    FusionConfig cfg = tiny_config();
    FusionModel model(cfg);
    ParamStore store;
    Rng rng(21);
    model.declare(store, rng);
    FusionTrainHyper hyper;
    hyper.lr = 2e-3;
    hyper.batch = 16;
    hyper.max_epochs = 40;
    hyper.patience = 40;
    hyper.seed = 22;
    train_fusion(model, store, train, val, hyper);
    double fused_mse = 0.0, base_mse = 0.0;
    for (const auto& s : val) {
        fused_mse += kern::sse(model.infer(store, s.base, s.candidates).fused, s.target);
        base_mse += kern::sse(s.base, s.target);
    }
    CHECK(fused_mse <= base_mse + 1e-6);
}
