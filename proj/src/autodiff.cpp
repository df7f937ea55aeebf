#include "es/autodiff.hpp"

namespace es {

Var Tape::leaf(Tensor value, bool requires_grad) {
    return emit(std::move(value), requires_grad, {});
}

Var Tape::emit(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back) {
    if (finite_checks() && !value.all_finite())
        throw NumericError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_alloc = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Var x) const {
    const Node& n = nodes_[static_cast<std::size_t>(check(x))];
    if (!n.grad_alloc) {
        static thread_local Tensor zero;
        zero = Tensor::zeros(n.value.shape);
        return zero;
    }
    return n.grad;
}

void Tape::backward(Var out) {
    const int oid = check(out);
    if (nodes_[static_cast<std::size_t>(oid)].value.size() != 1)
        throw ShapeError("backward() requires a scalar output, got " + shape_str(nodes_[static_cast<std::size_t>(oid)].value.shape));
    if (!nodes_[static_cast<std::size_t>(oid)].requires_grad) return;
    grad_buf(oid).v[0] = 1.0f;
    for (int i = oid; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.requires_grad && n.grad_alloc && n.back) n.back(*this, i);
    }
}

} // namespace es
