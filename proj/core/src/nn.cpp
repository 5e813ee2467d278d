// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/nn.hpp"

#include <cmath>

#include "dait/digest.hpp"

namespace dait {

namespace {

Tensor kaiming_uniform(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.vec()) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

LinearLayer LinearLayer::create(std::int64_t in, std::int64_t out, Rng& rng) {
    LinearLayer l;
    l.w = make_leaf(kaiming_uniform({out, in}, in, rng), true);
    l.b = make_leaf(Tensor::zeros({out}), true);
    return l;
}

LinearLayer LinearLayer::identity(std::int64_t dim) {
    LinearLayer l;
    Tensor w({dim, dim});
    for (std::int64_t i = 0; i < dim; ++i) w.at2(i, i) = 1.0;
    l.w = make_leaf(std::move(w), true);
    l.b = make_leaf(Tensor::zeros({dim}), true);
    return l;
}

void LinearLayer::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

Conv2dLayer Conv2dLayer::create(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
                                std::int64_t stride, std::int64_t pad, Rng& rng) {
    Conv2dLayer c;
    c.w = make_leaf(kaiming_uniform({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng), true);
    c.b = make_leaf(Tensor::zeros({out_ch}), true);
    c.stride = stride;
    c.pad = pad;
    return c;
}

Conv2dLayer Conv2dLayer::identity_1x1(std::int64_t ch) {
    Conv2dLayer c;
    Tensor w({ch, ch, 1, 1});
    for (std::int64_t i = 0; i < ch; ++i) w[i * ch + i] = 1.0;
    c.w = make_leaf(std::move(w), true);
    c.b = make_leaf(Tensor::zeros({ch}), true);
    c.stride = 1;
    c.pad = 0;
    return c;
}

void Conv2dLayer::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

Mlp2 Mlp2::create(std::int64_t in, std::int64_t hidden, std::int64_t out, Rng& rng) {
    Mlp2 m;
    m.l1 = LinearLayer::create(in, hidden, rng);
    m.l2 = LinearLayer::create(hidden, out, rng);
    return m;
}

void Mlp2::collect(NamedParams& out, const std::string& prefix) const {
    l1.collect(out, prefix + ".l1");
    l2.collect(out, prefix + ".l2");
}

ConvStack ConvStack::create(std::int64_t in_ch, const std::vector<std::int64_t>& channels, Rng& rng) {
    if (channels.empty()) throw ContractError("ConvStack needs at least one block");
    ConvStack s;
    std::int64_t prev = in_ch;
    for (std::int64_t ch : channels) {
        s.blocks.push_back(Conv2dLayer::create(prev, ch, 3, 2, 1, rng));
        prev = ch;
    }
    return s;
}

Var ConvStack::forward(const Var& x) const {
    Var h = x;
    for (const auto& b : blocks) h = vrelu(b.forward(h));
    return h;
}

Tensor ConvStack::forward(const Tensor& x) const {
    Tensor h = x;
    for (const auto& b : blocks) h = relu_forward(b.forward(h));
    return h;
}

void ConvStack::collect(NamedParams& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".block" + std::to_string(i));
}

std::uint64_t params_checksum(const NamedParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, var] : params) {
        h = fnv1a64(name.data(), name.size(), h);
        const auto& v = var->value.vec();
        h = fnv1a64(v.data(), v.size() * sizeof(double), h);
    }
    return h;
}

std::int64_t params_count(const NamedParams& params) {
    std::int64_t n = 0;
    for (const auto& [name, var] : params) n += var->value.numel();
    return n;
}

AdamW::AdamW(NamedParams params, AdamWConfig cfg) : cfg_(cfg) {
    for (auto& [name, var] : params) {
        Slot s;
        s.name = name;
        s.param = var;
        s.m = Tensor::zeros(var->value.shape());
        s.v = Tensor::zeros(var->value.shape());
        slots_.push_back(std::move(s));
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
        if (!s.trainable || !s.param->has_grad()) continue;
        auto& p = s.param->value;
        const auto& g = s.param->grad;
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.param->clear_grad();
}

void AdamW::set_group_trainable(const std::string& prefix, bool trainable) {
    for (auto& s : slots_)
        if (s.name.rfind(prefix, 0) == 0) s.trainable = trainable;
}

}  // namespace dait
