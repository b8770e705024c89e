#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "leno/tensor.hpp"

namespace leno {

// One recorded primitive application. backward_fn accumulates into the
// parents' grad buffers given this node's grad.
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;          // lazily sized on first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.data.empty()) grad = Tensor<T>(value.shape, T(0));
    }
};

// Handle to a node in the autodiff graph. Copies share the node.
template <class T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    // Leaf constructor.
    explicit Var(Tensor<T> value, bool requires_grad = false) {
        node_ = std::make_shared<Node<T>>();
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    bool valid() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<Node<T>> node() const { return node_; }

    void zero_grad() {
        if (node_) node_->grad = Tensor<T>();
    }

private:
    std::shared_ptr<Node<T>> node_;
};

using VarF = Var<float>;
using VarD = Var<double>;

// While a NoGradGuard is alive on this thread, primitives skip all gradient
// bookkeeping regardless of their inputs' requires_grad flags.
inline bool& no_grad_flag() {
    thread_local bool flag = false;
    return flag;
}

struct NoGradGuard {
    NoGradGuard() : prev_(no_grad_flag()) { no_grad_flag() = true; }
    ~NoGradGuard() { no_grad_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <class T>
Var<T> make_result(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
    if (!value.all_finite())
        throw DomainError("operation produced non-finite values");
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->is_leaf = false;
    bool any = false;
    if (!no_grad_flag()) {
        for (const auto& p : parents)
            if (p && p->requires_grad) any = true;
    }
    n->requires_grad = any;
    if (any) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Var<T>(std::move(n));
}

namespace detail {

template <class T>
void topo_visit(const std::shared_ptr<Node<T>>& n,
                std::unordered_set<const Node<T>*>& seen,
                std::vector<std::shared_ptr<Node<T>>>& order) {
    if (!n || !n->requires_grad || seen.count(n.get())) return;
    seen.insert(n.get());
    for (const auto& p : n->parents) topo_visit(p, seen, order);
    order.push_back(n);
}

} // namespace detail

// Reverse-mode sweep from a scalar loss. Grad accumulates additively across
// fan-out; each node's backward rule runs exactly once.
template <class T>
void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1)
        throw ContractError("backward requires a scalar loss");
    if (!loss.requires_grad()) return;

    std::unordered_set<const Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> order;
    detail::topo_visit(loss.node(), seen, order);

    loss.node()->ensure_grad();
    loss.node()->grad.data[0] = T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& n = **it;
        if (n.backward_fn) {
            n.ensure_grad();
            n.backward_fn(n);
        }
    }
}

} // namespace leno
