#include "gsmo/tape.hpp"

namespace gsmo {

const Tensor& Value::tensor() const { return tape->value_of(id); }

Value Tape::leaf(Tensor t, bool requires_grad) { return node(std::move(t), requires_grad); }

Value Tape::watch(Parameter& p) {
    Value v = node(p.value, p.trainable);
    watched_.emplace_back(&p, v.id);
    return v;
}

Value Tape::node(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad});
    return Value{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::step(std::function<void()> backward_fn) { steps_.push_back(std::move(backward_fn)); }

Tensor& Tape::grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

GradientMap Tape::backward(const Value& loss) {
    if (loss.tape != this) throw ShapeError("backward: loss lives on a different tape");
    if (value_of(loss.id).numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " +
                         shape_str(value_of(loss.id).shape));
    }
    grad(loss.id).data[0] = 1.0f;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();

    GradientMap out;
    for (const auto& [param, id] : watched_) {
        if (!param->trainable) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        out[param->name] = n.grad.data.empty() ? Tensor::zeros(n.value.shape) : n.grad;
    }
    return out;
}

} // namespace gsmo
