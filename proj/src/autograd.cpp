#include "hdan/autograd.hpp"

#include <unordered_set>

#include "hdan/errors.hpp"

namespace hdan {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

NodePtr make_constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return n;
}

NodePtr make_param(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

void backward(const NodePtr& root) {
    if (!root) throw ShapeMismatch("backward on null node");
    if (root->value.numel() != 1)
        throw ShapeMismatch("backward root must be scalar, got " + shape_str(root->value.shape));

    // Iterative post-order DFS; children finish before their node is listed,
    // so the reversed list visits every node after all of its consumers.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backprop) continue;  // leaves keep their accumulated grads
        if (!n->grad.empty()) n->backprop(*n);
        // A node's grad feeds only its own backprop, so both can be released
        // as soon as it has run; this caps peak memory during backward.
        n->grad = Tensor();
        n->backprop = nullptr;
    }
}

}  // namespace hdan
