// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/autodiff.hpp"

#include <unordered_set>

namespace dait {

Var make_leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var make_constant(Tensor value) { return make_leaf(std::move(value), false); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    bool needs = false;
    for (const auto& p : parents)
        if (p && p->requires_grad) needs = true;
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

void backward(const Var& root) {
    if (!root) throw ContractError("backward on null var");
    if (root->value.numel() != 1) throw ContractError("backward root must be scalar");
    if (!root->requires_grad) return;

    // Iterative post-order DFS over gradient-requiring nodes.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->accumulate(Tensor::full(root->value.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
    }
}

namespace {

void accumulate_if_needed(const Var& p, const Tensor& g) {
    if (p && p->requires_grad) p->accumulate(g);
}

}  // namespace

Var vadd(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "vadd");
    return make_op(a->value + b->value, {a, b}, [](Node& n) {
        accumulate_if_needed(n.parents[0], n.grad);
        accumulate_if_needed(n.parents[1], n.grad);
    });
}

Var vscale(const Var& a, double s) {
    return make_op(a->value * s, {a}, [s](Node& n) { accumulate_if_needed(n.parents[0], n.grad * s); });
}

Var vcombine(const std::vector<std::pair<double, Var>>& terms) {
    if (terms.empty()) throw ContractError("vcombine: no terms");
    Tensor value = terms[0].second->value * terms[0].first;
    std::vector<Var> parents;
    std::vector<double> coeffs;
    parents.reserve(terms.size());
    for (const auto& [c, v] : terms) {
        parents.push_back(v);
        coeffs.push_back(c);
    }
    for (std::size_t i = 1; i < terms.size(); ++i) value += terms[i].second->value * terms[i].first;
    return make_op(std::move(value), std::move(parents), [coeffs](Node& n) {
        for (std::size_t i = 0; i < coeffs.size(); ++i) accumulate_if_needed(n.parents[i], n.grad * coeffs[i]);
    });
}

Var vmatmul_nt(const Var& a, const Var& b) {
    return make_op(matmul_nt(a->value, b->value), {a, b}, [](Node& n) {
        const Var& a = n.parents[0];
        const Var& b = n.parents[1];
        if (a->requires_grad) a->accumulate(matmul(n.grad, b->value));
        if (b->requires_grad) b->accumulate(matmul_tn(n.grad, a->value));
    });
}

Var vlinear(const Var& x, const Var& w, const Var& b) {
    return make_op(linear_forward(x->value, w->value, b->value), {x, w, b}, [](Node& n) {
        const Var& x = n.parents[0];
        const Var& w = n.parents[1];
        const Var& b = n.parents[2];
        Tensor gx, gw, gb;
        linear_backward(x->value, w->value, n.grad, x->requires_grad ? &gx : nullptr,
                        w->requires_grad ? &gw : nullptr, b->requires_grad ? &gb : nullptr);
        if (x->requires_grad) x->accumulate(gx);
        if (w->requires_grad) w->accumulate(gw);
        if (b->requires_grad) b->accumulate(gb);
    });
}

Var vconv2d(const Var& x, const Var& w, const Var& b, std::int64_t stride, std::int64_t pad) {
    return make_op(conv2d_forward(x->value, w->value, b->value, stride, pad), {x, w, b},
                   [stride, pad](Node& n) {
                       const Var& x = n.parents[0];
                       const Var& w = n.parents[1];
                       const Var& b = n.parents[2];
                       Tensor gx, gw, gb;
                       conv2d_backward(x->value, w->value, n.grad, stride, pad,
                                       x->requires_grad ? &gx : nullptr, w->requires_grad ? &gw : nullptr,
                                       b->requires_grad ? &gb : nullptr);
                       if (x->requires_grad) x->accumulate(gx);
                       if (w->requires_grad) w->accumulate(gw);
                       if (b->requires_grad) b->accumulate(gb);
                   });
}

Var vrelu(const Var& x) {
    return make_op(relu_forward(x->value), {x}, [](Node& n) {
        accumulate_if_needed(n.parents[0], relu_backward(n.parents[0]->value, n.grad));
    });
}

Var vtanh(const Var& x) {
    Tensor y = tanh_forward(x->value);
    return make_op(y, {x}, [](Node& n) {
        accumulate_if_needed(n.parents[0], tanh_backward(n.value, n.grad));
    });
}

Var vglobal_avg_pool(const Var& x) {
    return make_op(global_avg_pool_forward(x->value), {x}, [](Node& n) {
        accumulate_if_needed(n.parents[0], global_avg_pool_backward(n.parents[0]->value, n.grad));
    });
}

Var vadaptive_avg_pool(const Var& x, std::int64_t oh, std::int64_t ow) {
    return make_op(adaptive_avg_pool_forward(x->value, oh, ow), {x}, [oh, ow](Node& n) {
        accumulate_if_needed(n.parents[0], adaptive_avg_pool_backward(n.parents[0]->value, n.grad, oh, ow));
    });
}

Var vl2_normalize_rows(const Var& x, const char* who) {
    return make_op(l2_normalize_rows(x->value, who), {x}, [](Node& n) {
        accumulate_if_needed(n.parents[0], l2_normalize_rows_backward(n.parents[0]->value, n.grad));
    });
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double h) {
    Tensor g = Tensor::zeros(at.shape());
    Tensor x = at;
    for (std::int64_t i = 0; i < at.numel(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace dait
