#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gsmo/tensor.hpp"

namespace gsmo {

/// Named model weight. Names are unique within one model.
struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
};

class Tape;

/// Handle to a node recorded on a tape.
struct Value {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& tensor() const;
};

using GradientMap = std::map<std::string, Tensor>;

/// Reverse-mode gradient tape. Operations append backward steps in execution
/// order; backward() replays them in exact reverse order. One tape serves one
/// forward/backward pass; independent tapes are independent.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;            // backward steps hold a reference to *this
    Tape& operator=(const Tape&) = delete;

    Value leaf(Tensor t, bool requires_grad = false);

    /// Leaf tied to a parameter; its gradient appears in the backward() map
    /// (zero tensor when the loss never touches it).
    Value watch(Parameter& p);

    /// Gradients of all watched trainable parameters w.r.t. a scalar loss.
    GradientMap backward(const Value& loss);

    // Builder interface used by the operators.
    Value node(Tensor value, bool requires_grad);
    void step(std::function<void()> backward_fn);
    const Tensor& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.data.empty(); }
    /// Gradient buffer for a node, zero-allocated on first use.
    Tensor& grad(int id);

private:
    struct Node {
        Tensor value;
        Tensor grad; // empty until first accumulation
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
    std::vector<std::function<void()>> steps_;
    std::vector<std::pair<const Parameter*, int>> watched_;
};

} // namespace gsmo
