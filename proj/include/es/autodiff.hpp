#pragma once

#include <deque>
#include <functional>

#include "es/tensor.hpp"

namespace es {

/// Handle into a Tape node.
struct Var {
    int id = -1;
    bool ok() const { return id >= 0; }
};

/// Eager reverse-mode tape. Each op computes its value on construction and
/// records a backward closure; backward() runs the closures in reverse
/// creation order. One tape per training step; values and gradients live in
/// the tape, handles stay cheap.
class Tape {
  public:
    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& val(Var x) const { return nodes_[check(x)].value; }
    const Shape& shape(Var x) const { return nodes_[check(x)].value.shape; }
    bool requires_grad(Var x) const { return nodes_[check(x)].requires_grad; }

    /// Valid after backward(); zero tensor if the node never received gradient.
    const Tensor& grad(Var x) const;

    /// Seeds d(out)/d(out) = 1 and sweeps the tape. `out` must be scalar.
    void backward(Var out);

    std::size_t size() const { return nodes_.size(); }

    /// Internal: append a computed node. `back(tape, self_id)` may be empty
    /// for leaves and gradient-free results.
    Var emit(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back);

    /// Internal: gradient accumulation buffer for node `id` (allocated lazily).
    Tensor& grad_buf(int id);
    bool grad_ready(int id) const { return nodes_[static_cast<std::size_t>(id)].grad_alloc; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, int)> back;
        bool requires_grad = false;
        bool grad_alloc = false;
    };

    int check(Var x) const {
        if (!x.ok() || static_cast<std::size_t>(x.id) >= nodes_.size())
            throw Error("invalid tape handle");
        return x.id;
    }

    // Deque keeps value/shape references stable while later ops append nodes.
    std::deque<Node> nodes_;
};

} // namespace es
