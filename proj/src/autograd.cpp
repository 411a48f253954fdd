#include "ban/autograd.hpp"

#include <unordered_set>

#include "ban/error.hpp"

namespace ban {

namespace detail {

void accumulate_grad(Node& node, const Tensor& g) {
    if (!node.requires_grad) return;
    if (node.grad.empty()) {
        node.grad = g;
        return;
    }
    require_same_shape(node.grad, g, "gradient accumulation");
    float* dst = node.grad.data();
    const float* src = g.data();
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

void accumulate_grad(Node& node, Tensor&& g) {
    if (!node.requires_grad) return;
    if (node.grad.empty()) {
        node.grad = std::move(g);
        return;
    }
    accumulate_grad(node, static_cast<const Tensor&>(g));
}

}  // namespace detail

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(detail::Node&)> backward) {
    Var out(std::move(value), false);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward);
    return out;
}

void Var::backward() const {
    if (!node_) throw Error("backward on undefined Var");
    if (node_->value.numel() != 1) {
        throw ShapeError("backward requires a single-element value, got " + shape_str(node_->value.shape()));
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the recorded graph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (child->requires_grad && child->backward && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(n);
        stack.pop_back();
    }

    detail::accumulate_grad(*node_, Tensor(node_->value.shape(), 1.0f));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->grad.empty() || !n->backward) continue;
        n->backward(*n);
        n->grad = Tensor();
    }
}

}  // namespace ban
