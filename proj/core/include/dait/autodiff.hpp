// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over Tensor. Graphs are built dynamically per forward
// pass; nodes whose inputs carry no gradient requirement are pruned to plain
// values, so constant (teacher-side) operands never receive gradients.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dait/kernels.hpp"
#include "dait/tensor.hpp"

namespace dait {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad;  // empty until backward touches this node
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    bool has_grad() const { return !grad.empty(); }
    void accumulate(const Tensor& g) {
        if (grad.empty())
            grad = g;
        else
            grad += g;
    }
    void clear_grad() { grad = Tensor(); }
};

// Trainable leaf (parameters) or, with requires_grad=false, a constant.
Var make_leaf(Tensor value, bool requires_grad);
Var make_constant(Tensor value);

// Generic op node; prunes to a constant when no parent needs gradients.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Backpropagate from a scalar root (numel == 1).
void backward(const Var& root);

// --- differentiable ops ---------------------------------------------------

Var vadd(const Var& a, const Var& b);
Var vscale(const Var& a, double s);
// sum_i coeffs[i] * vars[i]; all operands must share a shape.
Var vcombine(const std::vector<std::pair<double, Var>>& terms);
Var vmatmul_nt(const Var& a, const Var& b);
Var vlinear(const Var& x, const Var& w, const Var& b);
Var vconv2d(const Var& x, const Var& w, const Var& b, std::int64_t stride, std::int64_t pad);
Var vrelu(const Var& x);
Var vtanh(const Var& x);
Var vglobal_avg_pool(const Var& x);
Var vadaptive_avg_pool(const Var& x, std::int64_t oh, std::int64_t ow);
Var vl2_normalize_rows(const Var& x, const char* who);

// Central-difference gradient checking utility used by the test oracles.
// f consumes a value tensor and returns a scalar.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double h);

}  // namespace dait
