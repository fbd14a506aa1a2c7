#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <limits>

#include "comhom/error.hpp"
#include "comhom/gradcheck.hpp"
#include "comhom/layers.hpp"
#include "comhom/rng.hpp"
#include "comhom/tape.hpp"
#include "doctest.h"

using namespace comhom;
using nn::LayerGraph;
using nn::ParameterSet;
using nn::ParameterSet64;
using nn::Tape;
using nn::Tensor;
using nn::Tensor64;

namespace {

Tensor64 randn(std::vector<int> shape, RngStream& rng, double scale = 1.0) {
    Tensor64 t(std::move(shape));
    for (double& v : t.values) v = rng.normal() * scale;
    return t;
}

}  // namespace

// Oracle (hand-derived): y = W x with W=[[1]], x=[1], squared-error target 0.
// loss = 1, dloss/dW = 2 x y = 2, dloss/dx = 2 W y = 2.
TEST_CASE("dense squared-error single weight") {
    LayerGraph graph;
    graph.dense("lin", 1, 1, /*bias=*/false);
    ParameterSet params;
    params.add("lin.w", Tensor({1, 1}, {1.0f}));
    const float loss = nn::forward_backward(graph, params, Tensor({1, 1}, {1.0f}),
                                            nn::SquaredErrorHead{Tensor({1, 1}, {0.0f})});
    CHECK(loss == doctest::Approx(1.0));
    CHECK(params.grad("lin.w").values[0] == doctest::Approx(2.0));
}

// Oracle: identity weights, zero residual, so loss and all gradients vanish.
TEST_CASE("dense identity zero loss zero grads") {
    LayerGraph graph;
    graph.dense("lin", 2, 2, false);
    ParameterSet params;
    params.add("lin.w", Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f}));
    const Tensor x({1, 2}, {2.0f, 3.0f});
    const float loss =
        nn::forward_backward(graph, params, x, nn::SquaredErrorHead{Tensor({1, 2}, {2.0f, 3.0f})});
    CHECK(loss == 0.0f);
    for (const float g : params.grad("lin.w").values) CHECK(g == 0.0f);
}

// All-zero logits over C classes: cross-entropy must equal ln C.
TEST_CASE("cross-entropy of zero logits is ln C") {
    for (const int c : {2, 5, 24}) {
        Tape<float> tape;
        const int logits = tape.input(Tensor({3, c}));
        const int loss = tape.softmax_cross_entropy(logits, {0, c > 1 ? 1 : 0, c - 1});
        CHECK(tape.scalar(loss) == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-6));
    }
}

TEST_CASE("cross-entropy gradient is (p - onehot)/n") {
    ParameterSet params;
    params.add("logits", Tensor({1, 5}));
    Tape<float> tape(params);
    const int logits = tape.param("logits");
    const int loss = tape.softmax_cross_entropy(logits, {2});
    tape.backward(loss);
    const Tensor& g = params.grad("logits");
    for (int i = 0; i < 5; ++i)
        CHECK(g.values[static_cast<std::size_t>(i)] ==
              doctest::Approx(0.2 - (i == 2 ? 1.0 : 0.0)).epsilon(1e-6));
}

// Oracle (hand-derived): x=[1,2,3], w=[1,0,-1], stride 1, pad 1, sum-squared
// loss. Forward y=[-2,-2,2], loss 12, dw=[4,0,-20], dx=[-4,8,4].
TEST_CASE("conv1d hand-computed forward and backward") {
    ParameterSet params;
    params.add("w", Tensor({1, 1, 3}, {1.0f, 0.0f, -1.0f}));
    params.add("x", Tensor({1, 1, 3}, {1.0f, 2.0f, 3.0f}));
    Tape<float> tape(params);
    const int y = tape.conv1d(tape.param("x"), tape.param("w"), -1, 1, 1);
    CHECK(tape.value(y).values == std::vector<float>{-2.0f, -2.0f, 2.0f});
    const int loss = tape.squared_error_sum(y, Tensor({1, 1, 3}));
    CHECK(tape.backward(loss) == doctest::Approx(12.0));
    CHECK(params.grad("w").values == std::vector<float>{4.0f, 0.0f, -20.0f});
    CHECK(params.grad("x").values == std::vector<float>{-4.0f, 8.0f, 4.0f});
}

// Oracle (hand-derived): pool of [[1,2,3],[4,5,6]] is [2,5]; sum-squared loss
// 29; each time step receives dy/t = [4/3, 10/3].
TEST_CASE("global average pool forward and backward") {
    ParameterSet params;
    params.add("x", Tensor({1, 2, 3}, {1, 2, 3, 4, 5, 6}));
    Tape<float> tape(params);
    const int y = tape.global_avg_pool(tape.param("x"));
    CHECK(tape.value(y).values[0] == doctest::Approx(2.0));
    CHECK(tape.value(y).values[1] == doctest::Approx(5.0));
    const int loss = tape.squared_error_sum(y, Tensor({1, 2}));
    CHECK(tape.backward(loss) == doctest::Approx(29.0));
    for (int i = 0; i < 3; ++i)
        CHECK(params.grad("x").values[static_cast<std::size_t>(i)] == doctest::Approx(4.0 / 3));
    for (int i = 3; i < 6; ++i)
        CHECK(params.grad("x").values[static_cast<std::size_t>(i)] == doctest::Approx(10.0 / 3));
}

TEST_CASE("finite differences agree for every primitive op") {
    RngStream rng(17, "autodiff-fd");
    nn::GradCheckOptions opt;
    opt.tolerance = 1e-6;

    SUBCASE("dense with bias") {
        ParameterSet64 params;
        params.add("w", randn({4, 3}, rng));
        params.add("b", randn({4}, rng));
        params.add("x", randn({2, 3}, rng));
        auto report = nn::grad_check(
            [&](Tape<double>& t) {
                const int y = t.dense(t.param("x"), t.param("w"), t.param("b"));
                return t.squared_error_sum(y, Tensor64({2, 4}));
            },
            params, opt);
        CHECK(report.passed);
        CHECK(report.max_rel_err < 1e-6);
    }

    SUBCASE("conv1d stride 2 pad 3") {
        ParameterSet64 params;
        params.add("w", randn({3, 2, 7}, rng));
        params.add("b", randn({3}, rng));
        params.add("x", randn({2, 2, 11}, rng));
        auto report = nn::grad_check(
            [&](Tape<double>& t) {
                const int y = t.conv1d(t.param("x"), t.param("w"), t.param("b"), 2, 3);
                return t.squared_error_sum(y, Tensor64(t.value(y).shape));
            },
            params, opt);
        CHECK(report.passed);
    }

    SUBCASE("relu and residual add") {
        ParameterSet64 params;
        params.add("x", randn({3, 5}, rng));
        params.add("w", randn({5, 5}, rng));
        auto report = nn::grad_check(
            [&](Tape<double>& t) {
                const int x = t.param("x");
                const int h = t.relu(t.dense(x, t.param("w"), -1));
                const int y = t.add(x, h);
                return t.squared_error_sum(y, Tensor64({3, 5}));
            },
            params, opt);
        CHECK(report.passed);
    }

    SUBCASE("gather repeat tile concat sqdist mean") {
        ParameterSet64 params;
        params.add("a", randn({4, 3}, rng));
        params.add("b", randn({2, 3}, rng));
        auto report = nn::grad_check(
            [&](Tape<double>& t) {
                const int a = t.param("a");
                const int b = t.param("b");
                const int ga = t.gather_rows(a, {3, 0, 2, 0});  // duplicates exercise scatter-add
                const int rb = t.repeat_rows_each(b, 2);
                const int tb = t.tile_rows(b, 2);
                const int cc = t.concat_cols({ga, rb});
                const int d = t.row_sqdist(cc, t.concat_cols({tb, ga}));
                const int m = t.mean_all(d);
                const int cr = t.concat_rows({ga, rb});
                const int m2 = t.mean_all(t.relu(cr));
                return t.weighted_sum({m, m2}, {1.0, 0.5});
            },
            params, opt);
        CHECK(report.passed);
    }

    SUBCASE("scale add_const sub softmax-ce") {
        ParameterSet64 params;
        params.add("x", randn({3, 4}, rng));
        params.add("y", randn({3, 4}, rng));
        auto report = nn::grad_check(
            [&](Tape<double>& t) {
                const int s = t.scale(t.sub(t.param("x"), t.param("y")), 0.5);
                const int z = t.add_const(s, 0.25);
                return t.softmax_cross_entropy(z, {0, 3, 1});
            },
            params, opt);
        CHECK(report.passed);
    }
}

TEST_CASE("forward_backward accumulates gradients until cleared") {
    LayerGraph graph;
    graph.dense("lin", 1, 1, false);
    ParameterSet params;
    params.add("lin.w", Tensor({1, 1}, {1.0f}));
    const Tensor x({1, 1}, {1.0f});
    const nn::LossHead head = nn::SquaredErrorHead{Tensor({1, 1}, {0.0f})};
    nn::forward_backward(graph, params, x, head);
    nn::forward_backward(graph, params, x, head);
    CHECK(params.grad("lin.w").values[0] == doctest::Approx(4.0));
    params.zero_grads();
    CHECK(params.grad("lin.w").values[0] == 0.0f);
}

TEST_CASE("identical graph, params, input give bit-identical loss and grads") {
    RngStream rng(23, "determinism");
    LayerGraph graph;
    graph.conv1d("c1", 2, 4, 3, 2, 1).relu().global_avg_pool().dense("fc", 4, 3);
    ParameterSet params;
    nn::init_layer_params(graph, params, rng);

    Tensor x({2, 2, 9});
    RngStream xr(24, "input");
    for (float& v : x.values) v = static_cast<float>(xr.normal());
    const nn::LossHead head = nn::SoftmaxCEHead{{0, 2}};

    ParameterSet p1 = params;
    ParameterSet p2 = params;
    const float l1 = nn::forward_backward(graph, p1, x, head);
    const float l2 = nn::forward_backward(graph, p2, x, head);
    CHECK(std::memcmp(&l1, &l2, sizeof(float)) == 0);
    for (const auto& [name, e] : p1) {
        const auto& g2 = p2.grad(name);
        CHECK(std::memcmp(e.grad.data(), g2.data(), e.grad.numel() * sizeof(float)) == 0);
    }
}

TEST_CASE("shape mismatches raise configuration errors") {
    Tape<float> tape;
    const int a = tape.input(Tensor({2, 3}));
    const int b = tape.input(Tensor({3, 2}));
    CHECK_THROWS_AS(tape.add(a, b), ConfigError);
    CHECK_THROWS_AS(tape.dense(a, b, -1), ConfigError);
    CHECK_THROWS_AS(tape.row_sqdist(a, b), ConfigError);
    const int x3 = tape.input(Tensor({1, 1, 4}));
    const int w = tape.input(Tensor({1, 1, 6}));
    CHECK_THROWS_AS(tape.conv1d(x3, w, -1, 1, 0), ConfigError);  // kernel longer than input
}

TEST_CASE("non-finite inputs are rejected at the boundary") {
    Tape<float> tape;
    Tensor bad({2});
    bad.values[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(tape.input(std::move(bad), "emg"), NumericError);
}

TEST_CASE("backward on a read-only tape is rejected") {
    ParameterSet params;
    params.add("w", Tensor({1, 1}, {2.0f}));
    const ParameterSet& frozen = params;
    Tape<float> tape(frozen);
    const int y = tape.dense(tape.input(Tensor({1, 1}, {1.0f})), tape.param("w"), -1);
    const int loss = tape.squared_error_sum(y, Tensor({1, 1}));
    CHECK_THROWS_AS(tape.backward(loss), ConfigError);
}
