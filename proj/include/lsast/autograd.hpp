#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lsast/tensor.hpp"

namespace lsast {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs' grads.
    std::function<void(Node&)> backward;

    Tensor& ensure_grad();
};

}  // namespace detail

// Handle to a value in a reverse-mode autodiff graph. Copies share the node.
class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var parameter(Tensor value, bool requires_grad = true);

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    // Direct access for optimizers and loaders; does not touch the graph.
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const Tensor& grad() const { return node_->grad; }
    void zero_grad() { node_->grad = Tensor(); }

    // Seeds d(this)/d(this) = 1; this must hold a single element.
    void backward() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    // Builds a graph node; records inputs only when gradient tracking is live.
    static Var make(Tensor value, std::vector<Var> inputs, std::function<void(detail::Node&)> backward);

private:
    std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace lsast
