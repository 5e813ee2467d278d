// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal layer zoo for the toy encoders: conv/linear layers with a dual
// forward (autodiff Var for training paths, plain Tensor for frozen paths),
// parameter bookkeeping, checksums, and AdamW.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dait/autodiff.hpp"
#include "dait/rng.hpp"

namespace dait {

using NamedParams = std::vector<std::pair<std::string, Var>>;

struct LinearLayer {
    Var w, b;  // w: (out, in)

    static LinearLayer create(std::int64_t in, std::int64_t out, Rng& rng);
    // Identity map (requires in == out); used for alignment-head tests.
    static LinearLayer identity(std::int64_t dim);
    Var forward(const Var& x) const { return vlinear(x, w, b); }
    Tensor forward(const Tensor& x) const { return linear_forward(x, w->value, b->value); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct Conv2dLayer {
    Var w, b;  // w: (out_ch, in_ch, k, k)
    std::int64_t stride = 1, pad = 0;

    static Conv2dLayer create(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel, std::int64_t stride,
                              std::int64_t pad, Rng& rng);
    // 1x1 convolution initialized to the identity channel map (in == out).
    static Conv2dLayer identity_1x1(std::int64_t ch);
    Var forward(const Var& x) const { return vconv2d(x, w, b, stride, pad); }
    Tensor forward(const Tensor& x) const { return conv2d_forward(x, w->value, b->value, stride, pad); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Two-layer MLP with ReLU, the f_vlm condensation projection.
struct Mlp2 {
    LinearLayer l1, l2;

    static Mlp2 create(std::int64_t in, std::int64_t hidden, std::int64_t out, Rng& rng);
    Var forward(const Var& x) const { return l2.forward(vrelu(l1.forward(x))); }
    Tensor forward(const Tensor& x) const { return l2.forward(relu_forward(l1.forward(x))); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Stack of stride-2 3x3 conv + ReLU blocks; halves the grid per block.
struct ConvStack {
    std::vector<Conv2dLayer> blocks;

    static ConvStack create(std::int64_t in_ch, const std::vector<std::int64_t>& channels, Rng& rng);
    Var forward(const Var& x) const;
    Tensor forward(const Tensor& x) const;
    void collect(NamedParams& out, const std::string& prefix) const;
    std::int64_t out_channels() const { return blocks.back().w->value.dim(0); }
};

// Checksum over parameter bytes in collection order; bit-exact freeze probe.
std::uint64_t params_checksum(const NamedParams& params);
std::int64_t params_count(const NamedParams& params);

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

class AdamW {
public:
    AdamW(NamedParams params, AdamWConfig cfg);

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    // Applies one update using the gradients currently on the parameters.
    void step();
    void zero_grad();
    // Parameters whose name starts with `prefix` stop receiving updates.
    void set_group_trainable(const std::string& prefix, bool trainable);

private:
    struct Slot {
        std::string name;
        Var param;
        Tensor m, v;
        bool trainable = true;
    };
    std::vector<Slot> slots_;
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
};

}  // namespace dait
