// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic gradients vs central finite differences, and teacher detachment.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "dait/losses.hpp"
#include "dait/nn.hpp"
#include "oracles.hpp"

using namespace dait;
using namespace dait::test;

namespace {

constexpr double kStep = 1e-4;
constexpr double kRelTol = 1e-3;

// max_i |analytic - fd| / max(1e-6, |fd|)
double max_rel_grad_err(const Tensor& analytic, const Tensor& fd) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < analytic.numel(); ++i) {
        const double denom = std::max(1e-6, std::abs(fd[i]));
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

Tensor analytic_grad(const std::function<Var(const Var&)>& loss_fn, const Tensor& at) {
    Var x = make_leaf(at, true);
    Var loss = loss_fn(x);
    backward(loss);
    REQUIRE(x->has_grad());
    return x->grad;
}

void check_grad(const std::function<Var(const Var&)>& loss_fn, const std::function<double(const Tensor&)>& value_fn,
                const Tensor& at) {
    const Tensor a = analytic_grad(loss_fn, at);
    const Tensor fd = finite_difference_grad(value_fn, at, kStep);
    CHECK(max_rel_grad_err(a, fd) < kRelTol);
}

}  // namespace

TEST_CASE("sia_loss gradient w.r.t. student cosines, both KL orders") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto B = static_cast<std::int64_t>(1 + rng.uniform_index(4));
        const auto N = static_cast<std::int64_t>(2 + rng.uniform_index(4));
        const Tensor cs = random_tensor({B, N}, rng);
        const Tensor ct = random_tensor({B, N}, rng);
        const Temperature T{rng.uniform(0.7, 3.0)};
        for (KlOrder order : {KlOrder::as_printed, KlOrder::teacher_first}) {
            check_grad([&](const Var& x) { return sia_loss(x, ct, T, order); },
                       [&](const Tensor& x) { return sia_loss(x, ct, T, order); }, cs);
        }
    }
}

TEST_CASE("ira_loss gradient w.r.t. student features") {
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        const auto B = static_cast<std::int64_t>(1 + rng.uniform_index(4));
        const auto D = static_cast<std::int64_t>(1 + rng.uniform_index(8));
        const Tensor t = random_tensor({B, D}, rng);
        // Keep |z - t| well away from the |.| kink so the finite difference
        // is valid at step 1e-4.
        Tensor z = t;
        for (double& v : z.vec()) v += (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 0.5);
        check_grad([&](const Var& x) { return ira_loss(x, t); },
                   [&](const Tensor& x) { return ira_loss(x, t); }, z);
    }
}

TEST_CASE("cls_loss gradient w.r.t. logits") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const auto B = static_cast<std::int64_t>(1 + rng.uniform_index(4));
        const auto N = static_cast<std::int64_t>(2 + rng.uniform_index(4));
        const Tensor logits = random_tensor({B, N}, rng, -2.0, 2.0);
        std::vector<std::int64_t> labels;
        for (std::int64_t i = 0; i < B; ++i)
            labels.push_back(static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(N))));
        const LabelBatch lb{labels};
        check_grad([&](const Var& x) { return cls_loss(x, lb); },
                   [&](const Tensor& x) { return cls_loss(LogitBatch{x}, lb); }, logits);
    }
}

TEST_CASE("sra_loss gradient w.r.t. the student map") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const auto B = static_cast<std::int64_t>(1 + rng.uniform_index(3));
        const auto D = static_cast<std::int64_t>(1 + rng.uniform_index(4));
        const auto HW = static_cast<std::int64_t>(1 + rng.uniform_index(3));
        const Tensor t = random_tensor({B, D, HW, HW}, rng);
        const Tensor z = random_tensor({B, D, HW, HW}, rng);
        check_grad([&](const Var& x) { return sra_loss(x, t); },
                   [&](const Tensor& x) { return sra_loss(FeatureMap{x}, FeatureMap{t}); }, z);
    }
}

TEST_CASE("logit_kd_loss gradient w.r.t. student logits") {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor t = random_tensor({3, 5}, rng);
        const Tensor s = random_tensor({3, 5}, rng);
        const Temperature T{2.0};
        for (KlOrder order : {KlOrder::as_printed, KlOrder::teacher_first}) {
            check_grad([&](const Var& x) { return logit_kd_loss(x, t, T, order); },
                       [&](const Tensor& x) { return logit_kd_loss(LogitBatch{x}, LogitBatch{t}, T, order); }, s);
        }
    }
}

TEST_CASE("teacher detachment: no gradient exists on teacher-side tensors") {
    Rng rng(53);
    const Tensor cs = random_tensor({2, 3}, rng);
    const Tensor ct = random_tensor({2, 3}, rng);

    // Teacher passed as a constant leaf: the graph prunes it entirely.
    Var teacher = make_constant(ct);
    Var student = make_leaf(cs, true);
    Var loss = sia_loss(student, teacher->value, Temperature{2.0});
    backward(loss);
    CHECK(student->has_grad());
    CHECK_FALSE(teacher->has_grad());
    CHECK_FALSE(teacher->requires_grad);

    // Perturbing the teacher changes the value, so it is genuinely used.
    Tensor ct2 = ct;
    ct2[0] += 0.25;
    CHECK(sia_loss(cs, ct, Temperature{2.0}) != sia_loss(cs, ct2, Temperature{2.0}));
}

TEST_CASE("gradient flows through cosine_matrix into features") {
    Rng rng(59);
    const Tensor f = random_tensor({2, 4}, rng);
    const Tensor anchors = random_tensor({3, 4}, rng);
    const Tensor ct = random_tensor({2, 3}, rng);
    const Temperature T{2.0};
    check_grad(
        [&](const Var& x) { return sia_loss(cosine_matrix(x, anchors), ct, T); },
        [&](const Tensor& x) {
            return sia_loss(cosine_matrix(FeatureBatch{x}, ClassAnchors{anchors, {}, {}}), ct, T);
        },
        f);
}

TEST_CASE("stage totals backpropagate their exact coefficients") {
    Rng rng(61);
    const Tensor cs = random_tensor({2, 3}, rng);
    const Tensor ct = random_tensor({2, 3}, rng);
    const Tensor zt = random_tensor({2, 4}, rng);
    Tensor zs = zt;
    for (double& v : zs.vec()) v += 0.3;
    std::vector<std::int64_t> labels{1, 0};
    const double lam = 0.3;

    Var cos_v = make_leaf(cs, true);
    Var z_v = make_leaf(zs, true);
    Var sia = sia_loss(cos_v, ct, Temperature{2.0});
    Var ira = ira_loss(z_v, zt);
    Var cls_input = make_leaf(random_tensor({2, 2}, rng), true);
    Var cls = cls_loss(cls_input, LabelBatch{labels});
    Var total = stage1_total(sia, ira, cls, lam);
    backward(total);

    Var cos_v2 = make_leaf(cs, true);
    Var sia2 = sia_loss(cos_v2, ct, Temperature{2.0});
    backward(sia2);
    for (std::int64_t i = 0; i < cs.numel(); ++i)
        CHECK(cos_v->grad[i] == doctest::Approx(cos_v2->grad[i] * (1.0 - lam) / 2.0).epsilon(1e-12));
}

// --- autodiff building blocks used by the encoder stacks -------------------------

namespace {

double scalar_sum(const Tensor& t) {
    double s = 0.0;
    for (std::int64_t i = 0; i < t.numel(); ++i) s += t[i] * (0.3 + 0.1 * static_cast<double>(i % 7));
    return s;
}

// Weighted sum as a scalar head so every output entry receives a distinct
// upstream gradient.
Var scalar_head(const Var& x) {
    Tensor w = Tensor::zeros(x->value.shape());
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    Var loss = make_op(Tensor::scalar(scalar_sum(x->value)), {x}, [w](Node& n) {
        Tensor g = w;
        g *= n.grad.item();
        n.parents[0]->accumulate(g);
    });
    return loss;
}

void check_primitive(const std::function<Var(const Var&)>& op, const Tensor& at) {
    check_grad([&](const Var& x) { return scalar_head(op(x)); },
               [&](const Tensor& x) {
                   Var v = make_constant(x);
                   return scalar_sum(op(v)->value);
               },
               at);
}

}  // namespace

TEST_CASE("conv2d / linear / pooling / activations / row-normalize gradients") {
    Rng rng(67);
    const Tensor x4 = random_tensor({2, 3, 5, 5}, rng);
    Rng wrng(68);
    auto conv = Conv2dLayer::create(3, 4, 3, 2, 1, wrng);
    check_primitive([&](const Var& v) { return conv.forward(v); }, x4);

    const Tensor x2 = random_tensor({3, 6}, rng);
    auto lin = LinearLayer::create(6, 4, wrng);
    check_primitive([&](const Var& v) { return lin.forward(v); }, x2);

    check_primitive([](const Var& v) { return vrelu(v); }, random_tensor({2, 3, 4, 4}, rng));
    check_primitive([](const Var& v) { return vtanh(v); }, x2);
    check_primitive([](const Var& v) { return vglobal_avg_pool(v); }, x4);
    check_primitive([](const Var& v) { return vadaptive_avg_pool(v, 2, 2); }, random_tensor({1, 2, 5, 3}, rng));
    check_primitive([](const Var& v) { return vl2_normalize_rows(v, "t"); }, random_tensor({3, 4}, rng, 0.3, 1.0));
}

TEST_CASE("conv weight and bias gradients") {
    Rng rng(71);
    const Tensor x = random_tensor({2, 2, 4, 4}, rng);
    Rng wrng(72);
    auto conv = Conv2dLayer::create(2, 3, 3, 1, 1, wrng);
    Var xv = make_constant(x);

    const auto loss_of = [&](const Tensor& w, const Tensor& b) {
        return scalar_sum(conv2d_forward(x, w, b, 1, 1));
    };
    Var loss = scalar_head(conv.forward(xv));
    backward(loss);
    const Tensor fd_w = finite_difference_grad([&](const Tensor& w) { return loss_of(w, conv.b->value); },
                                               conv.w->value, kStep);
    const Tensor fd_b = finite_difference_grad([&](const Tensor& b) { return loss_of(conv.w->value, b); },
                                               conv.b->value, kStep);
    CHECK(max_rel_grad_err(conv.w->grad, fd_w) < kRelTol);
    CHECK(max_rel_grad_err(conv.b->grad, fd_b) < kRelTol);
}

TEST_CASE("gradient accumulates across shared sub-expressions") {
    const Tensor x = Tensor::from_rows({{1.0, 2.0}});
    Var v = make_leaf(x, true);
    Var doubled = vadd(v, v);
    Var loss = make_op(Tensor::scalar(doubled->value[0] + doubled->value[1]), {doubled}, [](Node& n) {
        n.parents[0]->accumulate(Tensor::full(n.parents[0]->value.shape(), n.grad.item()));
    });
    backward(loss);
    CHECK(v->grad[0] == doctest::Approx(2.0));
    CHECK(v->grad[1] == doctest::Approx(2.0));
}
