#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>

#include "comhom/optim.hpp"
#include "doctest.h"

using comhom::nn::AdamW;
using comhom::nn::AdamWConfig;
using comhom::nn::ParameterSet;
using comhom::nn::Tensor;

// Oracle (closed form): p=1, g=1, lr=3e-4, wd=0, first step.
// m_hat = 1, v_hat = 1 after bias correction, so p' = 1 - lr/(1+eps).
TEST_CASE("single step matches the bias-corrected closed form") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0f;
    AdamW opt(cfg);
    ParameterSet params;
    params.add("p", Tensor({1}, {1.0f}));
    params.grad("p").values[0] = 1.0f;
    opt.step(params);
    CHECK(params.value("p").values[0] == doctest::Approx(1.0 - 3e-4 / (1.0 + 1e-8)).epsilon(1e-6));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("zero gradients and zero weight decay form an exact fixed point") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0f;
    AdamW opt(cfg);
    ParameterSet params;
    params.add("p", Tensor({3}, {1.2345f, -7.25f, 0.001f}));
    const Tensor before = params.value("p");
    for (int i = 0; i < 5; ++i) opt.step(params);
    CHECK(std::memcmp(before.data(), params.value("p").data(), 3 * sizeof(float)) == 0);
}

TEST_CASE("zero gradient with weight decay shrinks by exactly 1 - lr*wd") {
    AdamWConfig cfg;  // lr 3e-4, wd 0.01
    AdamW opt(cfg);
    ParameterSet params;
    params.add("p", Tensor({1}, {2.0f}));
    opt.step(params);
    const float expected = 2.0f * static_cast<float>(1.0 - 3e-4 * 0.01);
    CHECK(params.value("p").values[0] == expected);
}

TEST_CASE("step counter strictly increases once per update") {
    AdamW opt;
    ParameterSet params;
    params.add("p", Tensor({1}, {1.0f}));
    CHECK(opt.step_count() == 0);
    for (int i = 1; i <= 7; ++i) {
        opt.step(params);
        CHECK(opt.step_count() == i);
    }
}

TEST_CASE("moments are tracked per parameter") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0f;
    AdamW opt(cfg);
    ParameterSet params;
    params.add("a", Tensor({1}, {1.0f}));
    params.add("b", Tensor({1}, {1.0f}));
    params.grad("a").values[0] = 1.0f;  // b keeps zero grad
    opt.step(params);
    CHECK(params.value("a").values[0] < 1.0f);
    CHECK(params.value("b").values[0] == 1.0f);

    // Second step: a's momentum persists even with no fresh gradient.
    params.zero_grads();
    opt.step(params);
    CHECK(params.value("a").values[0] < 1.0f - 2e-4f);
    CHECK(params.value("b").values[0] == 1.0f);
}

// The update direction approaches -lr * sign(g) for a persistent gradient.
TEST_CASE("descends a quadratic") {
    AdamWConfig cfg;
    cfg.learning_rate = 0.05f;
    cfg.weight_decay = 0.0f;
    AdamW opt(cfg);
    ParameterSet params;
    params.add("p", Tensor({1}, {3.0f}));
    for (int i = 0; i < 400; ++i) {
        params.zero_grads();
        params.grad("p").values[0] = 2.0f * params.value("p").values[0];  // d/dp p^2
        opt.step(params);
    }
    CHECK(std::fabs(params.value("p").values[0]) < 0.05f);
}
