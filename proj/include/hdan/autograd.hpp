#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hdan/tensor.hpp"

namespace hdan {

// Define-by-run reverse-mode autodiff. Ops build Nodes while grad mode is
// on; backward() walks the recorded graph once in reverse topological order.
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    // Propagates this->grad into the parents' grads; invoked exactly once.
    std::function<void(Node&)> backprop;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape);
        return grad;
    }
};

NodePtr make_constant(Tensor v);
NodePtr make_param(Tensor v);

bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
};

// Seeds root->grad with 1 (root must be scalar) and runs the graph backward.
void backward(const NodePtr& root);

}  // namespace hdan
