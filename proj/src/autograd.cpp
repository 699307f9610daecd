#include "lsast/autograd.hpp"

#include <unordered_set>

#include "lsast/error.hpp"

namespace lsast {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor& detail::Node::ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

Var Var::constant(Tensor value) {
    Var v;
    v.node_ = std::make_shared<detail::Node>();
    v.node_->value = std::move(value);
    return v;
}

Var Var::parameter(Tensor value, bool requires_grad) {
    Var v = constant(std::move(value));
    v.node_->requires_grad = requires_grad;
    return v;
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(detail::Node&)> backward) {
    Var out = constant(std::move(value));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const Var& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (Var& in : inputs) out.node_->inputs.push_back(std::move(in.node_));
    out.node_->backward = std::move(backward);
    return out;
}

void Var::backward() const {
    require(node_ && node_->value.size() == 1, "backward() needs a scalar output");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (child && child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

}  // namespace lsast
