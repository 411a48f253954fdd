#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ban/tensor.hpp"

namespace ban {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs[i]->grad.
    std::function<void(Node&)> backward;
};

void accumulate_grad(Node& node, const Tensor& g);
void accumulate_grad(Node& node, Tensor&& g);

}  // namespace detail

// Handle to a value in a dynamically recorded computation graph.
//
// Graph edges are only recorded when at least one input requires a gradient,
// so a forward pass over frozen parameters allocates no backward state.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    // Leaf-only mutation, used by optimizers and checkpoint loading.
    Tensor& mutable_value() { return node_->value; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    // Empty tensor when no gradient has reached this node.
    const Tensor& grad() const { return node_->grad; }
    void zero_grad() { node_->grad = Tensor(); }

    // Reverse-mode sweep from a single-element value, seeding d(self) = 1.
    // Gradients accumulate into leaves; intermediate gradients are released.
    void backward() const;

    // Same value, no history.
    Var detach() const { return Var(node_->value, false); }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    // Builds a result node. `backward` is dropped when no input needs a gradient.
    static Var make(Tensor value, std::vector<Var> inputs, std::function<void(detail::Node&)> backward);

private:
    std::shared_ptr<detail::Node> node_;
};

}  // namespace ban
