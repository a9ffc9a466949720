#include "doctest.h"

#include <cmath>

#include "memf/adam.hpp"
#include "memf/graph.hpp"
#include "memf/kernels.hpp"
#include "memf/nn.hpp"
#include "memf/rng.hpp"
#include "memf/tape.hpp"

using namespace memf;

TEST_CASE("tensor shape/data invariant") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));
    CHECK(Tensor::vec({1, 2, 3}).shape() == std::vector<std::size_t>{3});
}

TEST_CASE("rng determinism and derivation") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42);
    Rng d1 = c.derive("stage-one");
    Rng d2 = c.derive("stage-two");
    CHECK(d1.uniform01() != d2.uniform01());
    // derivation does not consume from the parent stream
    Rng e(42);
    e.derive("stage-one");
    Rng f(42);
    CHECK(e.next_u64() == f.next_u64());
}

TEST_CASE("forward: identity, square, softmax symmetry") {
    Tape tape;
    auto x = tape.leaf(Tensor::vec({1, 2, 3}));
    CHECK(tape.value(x).raw() == std::vector<double>{1, 2, 3});

    auto sq = tape.mul(x, x);
    CHECK(tape.value(sq)[0] == 1.0);
    CHECK(tape.value(sq)[1] == 4.0);
    CHECK(tape.value(sq)[2] == 9.0);

    auto sm = tape.softmax(tape.leaf(Tensor::vec({0, 0, 0})), 1.0);
    for (int i = 0; i < 3; ++i) CHECK(tape.value(sm)[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("backward: analytic derivatives") {
    {
        // f(x) = x^2 at x=3 -> grad 6
        Tape tape;
        auto x = tape.leaf(Tensor::scalar(3.0), true);
        auto y = tape.mul(x, x);
        tape.backward(y);
        CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
    }
    {
        // f(x) = sum(x) -> grad ones
        Tape tape;
        auto x = tape.leaf(Tensor::vec({1, 5, 9}), true);
        auto y = tape.sum(x);
        tape.backward(y);
        for (int i = 0; i < 3; ++i) CHECK(tape.grad(x)[i] == 1.0);
    }
    {
        // tanh'(0) = 1
        Tape tape;
        auto x = tape.leaf(Tensor::scalar(0.0), true);
        auto y = tape.tanh_(x);
        tape.backward(y);
        CHECK(tape.grad(x)[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("backward before forward is a state error") {
    ParamStore params;
    params.add("w", Tensor::scalar(2.0));
    ComputeGraph g(
        [](Tape& t, const std::map<std::string, Tape::Var>& in, ParamStore& p) {
            Binder bind(t, p);
            std::map<std::string, Tape::Var> out;
            out["out"] = t.mul(bind("w"), in.at("x"));
            return out;
        },
        std::move(params), {{"x", {1}}});
    CHECK_THROWS_AS(g.backward(Tensor::scalar(1.0)), std::logic_error);
    auto out = g.forward({{"x", Tensor::scalar(3.0)}});
    CHECK(out.at("out")[0] == 6.0);
    auto grads = g.backward(Tensor::scalar(1.0));
    CHECK(grads.at("w")[0] == 3.0);
}

TEST_CASE("forward shape mismatch names the input") {
    ComputeGraph g(
        [](Tape& t, const std::map<std::string, Tape::Var>& in, ParamStore&) {
            std::map<std::string, Tape::Var> out;
            out["out"] = t.sum(in.at("x"));
            return out;
        },
        ParamStore{}, {{"x", {3}}});
    CHECK_THROWS_WITH_AS(g.forward({{"x", Tensor::scalar(1.0)}}),
                         doctest::Contains("input 'x'"), std::invalid_argument);
}

TEST_CASE("check_gradients: x^2 and constant graph") {
    {
        ParamStore params;
        params.add("x", Tensor::scalar(3.0));
        ComputeGraph g(
            [](Tape& t, const std::map<std::string, Tape::Var>&, ParamStore& p) {
                Binder bind(t, p);
                std::map<std::string, Tape::Var> out;
                out["out"] = t.mul(bind("x"), bind("x"));
                return out;
            },
            std::move(params), {});
        auto rep = g.check_gradients({}, 1e-5, 1e-6);
        CHECK(rep.passed);
        CHECK(rep.max_rel_error < 1e-6);
        CHECK(rep.checked == 1);
    }
    {
        // constant graph: all gradients zero, max error zero
        ParamStore params;
        params.add("unused", Tensor::vec({1, 2}));
        ComputeGraph g(
            [](Tape& t, const std::map<std::string, Tape::Var>&, ParamStore&) {
                std::map<std::string, Tape::Var> out;
                out["out"] = t.leaf(Tensor::scalar(7.0));
                return out;
            },
            std::move(params), {});
        auto rep = g.check_gradients({}, 1e-5, 1e-6);
        CHECK(rep.passed);
        CHECK(rep.max_rel_error == 0.0);
    }
}

namespace {

// 2-layer tanh network with 16 parameters: 3->3 (W 9 + b 3) then 1x3 + 1.
ComputeGraph small_mlp(std::uint64_t seed) {
    Rng rng(seed);
    ParamStore params;
    params.add("w1", glorot_uniform(rng, 3, 3));
    params.add("b1", Tensor::zeros({3}));
    params.add("w2", glorot_uniform(rng, 1, 3));
    params.add("b2", Tensor::zeros({1}));
    return ComputeGraph(
        [](Tape& t, const std::map<std::string, Tape::Var>& in, ParamStore& p) {
            Binder bind(t, p);
            auto h = t.tanh_(t.affine(bind("w1"), bind("b1"), in.at("x")));
            auto y = t.affine(bind("w2"), bind("b2"), h);
            std::map<std::string, Tape::Var> out;
            out["out"] = t.mul(y, y);
            return out;
        },
        std::move(params), {{"x", {3}}});
}

} // namespace

TEST_CASE("check_gradients: random 2-layer network, 16 params") {
    ComputeGraph g = small_mlp(7);
    CHECK(g.params().scalar_count() == 16);
    auto rep = g.check_gradients({{"x", Tensor::vec({0.3, -0.7, 1.1})}}, 1e-5, 1e-4);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("gradient check covers every tape op") {
    // one graph touching softmax, layer_norm, gelu, matmuls, concat and sse
    Rng rng(11);
    ParamStore params;
    params.add("W", glorot_uniform(rng, 4, 4));
    params.add("g", Tensor::full({4}, 1.0));
    params.add("b", Tensor::zeros({4}));
    params.add("proj", glorot_uniform(rng, 2, 4));
    params.add("pb", Tensor::zeros({2}));
    ComputeGraph g(
        [](Tape& t, const std::map<std::string, Tape::Var>& in, ParamStore& p) {
            Binder bind(t, p);
            auto X = t.stack_rows({in.at("x0"), in.at("x1")});       // [2 x 4]
            auto Y = t.matmul_nt(X, bind("W"));                      // [2 x 4]
            auto N = t.layer_norm(Y, bind("g"), bind("b"));
            auto A = t.softmax(t.matmul_nt(N, N), 2.0);              // [2 x 2]
            auto Z = t.matmul(A, N);                                 // [2 x 4]
            auto r0 = t.gelu(t.affine(bind("proj"), bind("pb"), t.row(Z, 0)));
            auto r1 = t.tanh_(t.affine(bind("proj"), bind("pb"), t.row(Z, 1)));
            auto c = t.concat({r0, r1});
            std::map<std::string, Tape::Var> out;
            out["out"] = t.sse(c, in.at("target"));
            return out;
        },
        std::move(params),
        {{"x0", {4}}, {"x1", {4}}, {"target", {4}}});
    NamedTensors in{{"x0", Tensor::vec({0.2, -1.0, 0.5, 0.9})},
                    {"x1", Tensor::vec({1.2, 0.1, -0.4, 0.3})},
                    {"target", Tensor::vec({0.1, 0.2, 0.3, 0.4})}};
    auto rep = g.check_gradients(in, 1e-5, 1e-4);
    INFO("max rel error ", rep.max_rel_error);
    CHECK(rep.passed);
}

TEST_CASE("softmax invariants: simplex and positivity") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits({5});
        for (std::size_t i = 0; i < 5; ++i) logits[i] = rng.uniform(-30.0, 30.0);
        Tensor y = kern::softmax(logits, trial % 2 ? 0.37 : 1.0);
        double sum = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(y[i] > 0.0);
            sum += y[i];
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("adam: spec examples") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    {
        // zero gradient everywhere -> parameters unchanged
        ParamStore params;
        params.add("p", Tensor::vec({1.0, -2.0}));
        GradStore grads;
        grads.accumulate("p", Tensor::zeros({2}));
        AdamState st;
        st.update(params, grads, cfg);
        CHECK(params.at("p")[0] == 1.0);
        CHECK(params.at("p")[1] == -2.0);
    }
    {
        // single param, positive gradient -> param decreases
        ParamStore params;
        params.add("p", Tensor::scalar(1.0));
        GradStore grads;
        grads.accumulate("p", Tensor::scalar(1.0));
        AdamState st;
        st.update(params, grads, cfg);
        CHECK(params.at("p")[0] < 1.0);
    }
    {
        // two identical params with identical grads stay identical
        ParamStore params;
        params.add("a", Tensor::scalar(0.5));
        params.add("b", Tensor::scalar(0.5));
        AdamState st;
        Rng rng(9);
        for (int step = 0; step < 25; ++step) {
            const double g = rng.normal();
            GradStore grads;
            grads.accumulate("a", Tensor::scalar(g));
            grads.accumulate("b", Tensor::scalar(g));
            st.update(params, grads, cfg);
            CHECK(params.at("a")[0] == params.at("b")[0]);
        }
    }
    {
        ParamStore params;
        params.add("p", Tensor::scalar(1.0));
        GradStore grads;
        grads.accumulate("p", Tensor::scalar(1.0));
        AdamState st;
        AdamConfig bad;
        bad.lr = 0.0;
        CHECK_THROWS_AS(st.update(params, grads, bad), std::invalid_argument);
    }
}

TEST_CASE("dropout: inverted scaling and eval identity") {
    Rng rng(5);
    Tape tape;
    auto x = tape.leaf(Tensor::full({1000}, 1.0), true);
    auto eval_out = tape.dropout(x, 0.4, rng, false);
    CHECK(tape.value(eval_out).raw() == tape.value(x).raw());

    auto train_out = tape.dropout(x, 0.4, rng, true);
    double mean = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
        const double v = tape.value(train_out)[i];
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.6)));
        mean += v;
    }
    CHECK(mean / 1000 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("transformer layer: tape forward matches kernel inference bitwise") {
    Rng rng(21);
    TransformerLayer layer("blk", 8, 2);
    ParamStore store;
    layer.declare(store, rng);
    Tensor X({3, 8});
    for (std::size_t i = 0; i < X.numel(); ++i) X[i] = rng.normal();

    Tape tape;
    Binder bind(tape, store);
    auto out_var = layer.forward(tape, bind, tape.leaf(X));
    Tensor tape_out = tape.value(out_var);
    Tensor kern_out = layer.infer(store, X);
    CHECK(tape_out.raw() == kern_out.raw());

    // batched path must agree with per-sample path exactly
    Tensor X2({6, 8});
    for (std::size_t i = 0; i < 24; ++i) {
        X2[i] = X[i];
        X2[24 + i] = rng.normal();
    }
    Tensor batched = layer.infer_batch(store, X2, 3);
    for (std::size_t i = 0; i < 24; ++i) CHECK(batched[i] == kern_out[i]);
}

TEST_CASE("tape training is bit-deterministic for a fixed seed") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        ParamStore store;
        store.add("w", glorot_uniform(rng, 2, 2));
        store.add("b", Tensor::zeros({2}));
        AdamState adam;
        AdamConfig cfg;
        Rng data_rng = rng.derive("data");
        for (int step = 0; step < 50; ++step) {
            Tensor x({2}), y({2});
            for (int i = 0; i < 2; ++i) {
                x[i] = data_rng.normal();
                y[i] = 0.5 * x[i] - 0.2;
            }
            Tape tape;
            Binder bind(tape, store);
            auto pred = tape.affine(bind("w"), bind("b"), tape.leaf(x));
            auto loss = tape.sse(pred, tape.leaf(y));
            tape.backward(loss);
            GradStore grads;
            tape.collect_param_grads(grads);
            adam.update(store, grads, cfg);
        }
        return store.checksum();
    };
    CHECK(run(123) == run(123));
    CHECK(run(123) != run(124));
}
